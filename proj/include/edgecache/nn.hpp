#pragma once

// Fully connected ReLU networks with hand-written backpropagation, the Adam
// optimizer and a text checkpoint format. Everything is double precision.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "edgecache/random.hpp"

namespace edgecache {

struct Divergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Mlp {
 public:
  // Forward activations kept for backpropagation.
  struct Tape {
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
  };

  Mlp() = default;

  explicit Mlp(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    for (auto d : dims_)
      if (d == 0) throw std::invalid_argument("Mlp layer width must be positive");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      w_offset_.push_back(offset);
      offset += dims_[l] * dims_[l + 1];
      b_offset_.push_back(offset);
      offset += dims_[l + 1];
    }
    params_.assign(offset, 0.0);
  }

  // Weights uniform in [-0.1, 0.1], biases 0.1.
  Mlp(std::vector<std::size_t> dims, Rng& rng) : Mlp(std::move(dims)) {
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    for (std::size_t l = 0; l < layer_count(); ++l) {
      for (auto& w : weights(l)) w = dist(rng);
      for (auto& b : biases(l)) b = 0.1;
    }
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t layer_count() const { return w_offset_.size(); }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t param_count() const { return params_.size(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Row-major [out x in].
  std::span<double> weights(std::size_t l) {
    return {params_.data() + w_offset_[l], dims_[l] * dims_[l + 1]};
  }
  std::span<const double> weights(std::size_t l) const {
    return {params_.data() + w_offset_[l], dims_[l] * dims_[l + 1]};
  }
  std::span<double> biases(std::size_t l) { return {params_.data() + b_offset_[l], dims_[l + 1]}; }
  std::span<const double> biases(std::size_t l) const {
    return {params_.data() + b_offset_[l], dims_[l + 1]};
  }

  // True for entries of weight matrices (excludes biases).
  std::vector<bool> weight_mask() const {
    std::vector<bool> mask(params_.size(), false);
    for (std::size_t l = 0; l < layer_count(); ++l)
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(w_offset_[l]),
                  dims_[l] * dims_[l + 1], true);
    return mask;
  }

  double weight_square_sum() const {
    double s = 0.0;
    for (std::size_t l = 0; l < layer_count(); ++l)
      for (double w : weights(l)) s += w * w;
    return s;
  }

  std::vector<double> forward(std::span<const double> x) const {
    check_input(x);
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      affine(l, cur, next);
      if (l + 1 < layer_count())
        for (auto& v : next) v = std::max(v, 0.0);
      cur.swap(next);
    }
    return cur;
  }

  std::vector<double> forward(std::span<const double> x, Tape& tape) const {
    check_input(x);
    tape.inputs.resize(layer_count());
    tape.pre.resize(layer_count());
    tape.inputs[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layer_count(); ++l) {
      affine(l, tape.inputs[l], tape.pre[l]);
      if (l + 1 < layer_count()) {
        auto& act = tape.inputs[l + 1];
        act.resize(tape.pre[l].size());
        for (std::size_t i = 0; i < act.size(); ++i) act[i] = std::max(tape.pre[l][i], 0.0);
      }
    }
    return tape.pre.back();
  }

  // Accumulates d(upstream . output)/d(params) into grad. The ReLU subgradient
  // at zero is zero.
  void backward(const Tape& tape, std::span<const double> upstream, std::span<double> grad) const {
    if (upstream.size() != output_dim()) throw std::invalid_argument("backward: upstream size");
    if (grad.size() != params_.size()) throw std::invalid_argument("backward: gradient size");
    std::vector<double> delta(upstream.begin(), upstream.end());
    std::vector<double> below;
    for (std::size_t l = layer_count(); l-- > 0;) {
      const std::size_t in = dims_[l];
      const std::size_t out = dims_[l + 1];
      const auto& a = tape.inputs[l];
      double* gw = grad.data() + w_offset_[l];
      double* gb = grad.data() + b_offset_[l];
      const double* w = params_.data() + w_offset_[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        gb[o] += d;
        if (d == 0.0) continue;
        double* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += d * a[i];
      }
      if (l == 0) break;
      below.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) below[i] += d * row[i];
      }
      const auto& pre = tape.pre[l - 1];
      for (std::size_t i = 0; i < in; ++i)
        if (!(pre[i] > 0.0)) below[i] = 0.0;
      delta.swap(below);
    }
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
  }

  void affine(std::size_t l, std::span<const double> in, std::vector<double>& out) const {
    const std::size_t ni = dims_[l];
    const std::size_t no = dims_[l + 1];
    const double* w = params_.data() + w_offset_[l];
    const double* b = params_.data() + b_offset_[l];
    out.resize(no);
    for (std::size_t o = 0; o < no; ++o) {
      const double* row = w + o * ni;
      double s = b[o];
      for (std::size_t i = 0; i < ni; ++i) s += row[i] * in[i];
      out[o] = s;
    }
  }

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> w_offset_;
  std::vector<std::size_t> b_offset_;
  std::vector<double> params_;
};

inline std::vector<double> gradients(const Mlp& net, std::span<const double> x,
                                     std::span<const double> upstream) {
  Mlp::Tape tape;
  net.forward(x, tape);
  std::vector<double> grad(net.param_count(), 0.0);
  net.backward(tape, upstream, grad);
  return grad;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double lz = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// Gradient descent step on the loss whose gradient is grads.
inline void apply_update(Mlp& net, std::span<const double> grads, OptimizerState& state,
                         const OptimizerConfig& cfg) {
  auto& p = net.params();
  if (grads.size() != p.size()) throw std::invalid_argument("apply_update: gradient size");
  for (double g : grads)
    if (!std::isfinite(g)) throw Divergence("non-finite gradient");
  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * grads[i];
    return;
  }
  if (state.m.size() != p.size()) {
    state.m.assign(p.size(), 0.0);
    state.v.assign(p.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    p[i] -= cfg.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.epsilon);
  }
}

namespace detail {

inline void write_doubles(std::ostream& os, const std::vector<double>& xs) {
  char buf[64];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, xs[i]);
    os.write(buf, end - buf);
    os.put(i + 1 == xs.size() ? '\n' : ' ');
  }
  if (xs.empty()) os.put('\n');
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t n) {
  std::vector<double> xs(n);
  std::string tok;
  for (auto& x : xs) {
    if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated array");
    auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc{} || end != tok.data() + tok.size())
      throw std::runtime_error("checkpoint: bad number '" + tok + "'");
  }
  return xs;
}

inline void expect_token(std::istream& is, const std::string& want) {
  std::string tok;
  if (!(is >> tok) || tok != want)
    throw std::runtime_error("checkpoint: expected '" + want + "', got '" + tok + "'");
}

}  // namespace detail

// Text checkpoint, shortest round-trip decimal for every double:
//   edgecache-mlp 1
//   layers <count> <dims...>
//   optimizer <0|1> [step <n>]
//   params <n> <values...>
//   [adam_m <n> <values...>  adam_v <n> <values...>]
inline void save_checkpoint(std::ostream& os, const Mlp& net, const OptimizerState* opt = nullptr) {
  os << "edgecache-mlp 1\nlayers " << net.dims().size();
  for (auto d : net.dims()) os << ' ' << d;
  const bool with_opt = opt && !opt->m.empty();
  os << "\noptimizer " << (with_opt ? 1 : 0);
  if (with_opt) os << " step " << opt->step;
  os << "\nparams " << net.param_count() << '\n';
  detail::write_doubles(os, net.params());
  if (with_opt) {
    os << "adam_m " << opt->m.size() << '\n';
    detail::write_doubles(os, opt->m);
    os << "adam_v " << opt->v.size() << '\n';
    detail::write_doubles(os, opt->v);
  }
}

inline Mlp load_checkpoint(std::istream& is, OptimizerState* opt = nullptr) {
  detail::expect_token(is, "edgecache-mlp");
  int version = 0;
  if (!(is >> version) || version != 1) throw std::runtime_error("checkpoint: unsupported version");
  detail::expect_token(is, "layers");
  std::size_t n = 0;
  is >> n;
  std::vector<std::size_t> dims(n);
  for (auto& d : dims) is >> d;
  if (!is) throw std::runtime_error("checkpoint: bad layer list");
  Mlp net(dims);
  detail::expect_token(is, "optimizer");
  int with_opt = 0;
  is >> with_opt;
  OptimizerState state;
  if (with_opt) {
    detail::expect_token(is, "step");
    is >> state.step;
  }
  detail::expect_token(is, "params");
  std::size_t count = 0;
  is >> count;
  if (count != net.param_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
  net.params() = detail::read_doubles(is, count);
  if (with_opt) {
    detail::expect_token(is, "adam_m");
    is >> count;
    state.m = detail::read_doubles(is, count);
    detail::expect_token(is, "adam_v");
    is >> count;
    state.v = detail::read_doubles(is, count);
  }
  if (opt) *opt = std::move(state);
  return net;
}

}  // namespace edgecache
