#pragma once

// Ring-buffer replay memory whose sampling distribution is the softmax
// similarity between each stored state and the agent's current state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "edgecache/env.hpp"
#include "edgecache/random.hpp"

namespace edgecache {

struct Transition {
  std::vector<double> state;  // flattened, scaled
  Action action = Action::skip;
  double log_prob_old = 0.0;
  double reward = 0.0;
  double tau = 1.0;
  std::vector<double> next_state;
  // Decision-epoch counter; consecutive transitions differ by exactly one.
  std::uint64_t epoch = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    slots_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  std::size_t write_head() const { return head_; }

  void push(Transition t) {
    if (slots_.size() < capacity_) {
      slots_.push_back(std::move(t));
    } else {
      slots_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
  }

  // Temporal index: 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const {
    if (i >= slots_.size()) throw std::out_of_range("replay index out of range");
    return slots_[physical(i)];
  }

  void clear() {
    slots_.clear();
    head_ = 0;
  }

 private:
  std::size_t physical(std::size_t i) const {
    return slots_.size() < capacity_ ? i : (head_ + i) % capacity_;
  }

  std::size_t capacity_;
  std::vector<Transition> slots_;
  std::size_t head_ = 0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Softmax over raw scores with the maximum subtracted first.
inline std::vector<double> softmax_scores(std::vector<double> raw) {
  if (raw.empty()) throw std::invalid_argument("attention over an empty key set");
  const double m = *std::max_element(raw.begin(), raw.end());
  double z = 0.0;
  for (auto& r : raw) z += (r = std::exp(r - m));
  for (auto& r : raw) r /= z;
  return raw;
}

// a_i = softmax_i(q . k_i), optionally divided by sqrt(dim) before the softmax.
inline std::vector<double> attention_scores(std::span<const double> query,
                                            const std::vector<std::vector<double>>& keys,
                                            bool scaled = false) {
  const double div = scaled ? std::sqrt(static_cast<double>(query.size())) : 1.0;
  std::vector<double> raw;
  raw.reserve(keys.size());
  for (const auto& k : keys) raw.push_back(dot(query, k) / div);
  return softmax_scores(std::move(raw));
}

inline std::vector<double> attention_scores(std::span<const double> query, const ReplayBuffer& buf,
                                            bool scaled = false) {
  const double div = scaled ? std::sqrt(static_cast<double>(query.size())) : 1.0;
  std::vector<double> raw;
  raw.reserve(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) raw.push_back(dot(query, buf.at(i).state) / div);
  return softmax_scores(std::move(raw));
}

// Priority equals the attention score.
inline std::vector<double> priorities(std::vector<double> scores) { return scores; }

// P(i) = p_i^alpha / sum_e p_e^alpha
inline std::vector<double> sampling_probabilities(std::span<const double> prio, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  if (prio.empty()) throw std::invalid_argument("no priorities");
  std::vector<double> out(prio.size());
  double z = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < prio.size(); ++i) {
    if (!(prio[i] >= 0.0)) throw std::invalid_argument("priorities must be non-negative");
    any = any || prio[i] > 0.0;
    out[i] = alpha == 0.0 ? 1.0 : std::pow(prio[i], alpha);
    z += out[i];
  }
  if (!any) throw std::invalid_argument("all priorities are zero");
  for (auto& p : out) p /= z;
  return out;
}

// w_i = (1 / (|buffer| * P(i)))^beta, without normalization.
inline std::vector<double> importance_weights_raw(std::span<const double> probs,
                                                  std::size_t buffer_size, double beta) {
  std::vector<double> w(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0)) throw std::invalid_argument("importance weight for P(i) = 0");
    w[i] = beta == 0.0 ? 1.0
                       : std::pow(1.0 / (static_cast<double>(buffer_size) * probs[i]), beta);
  }
  return w;
}

// Raw weights divided by their maximum over the batch.
inline std::vector<double> importance_weights(std::span<const double> probs,
                                              std::size_t buffer_size, double beta) {
  auto w = importance_weights_raw(probs, buffer_size, beta);
  if (w.empty()) return w;
  const double m = *std::max_element(w.begin(), w.end());
  for (auto& x : w) x = x == m ? 1.0 : x / m;
  return w;
}

struct SampledBatch {
  std::vector<std::size_t> starts;  // temporal index of each window's first transition
  std::vector<double> probs;        // P(start) under the full distribution
  std::vector<double> weights;      // max-normalized importance weights
  std::size_t window = 1;
};

struct ReplaySampling {
  double alpha = 0.4;
  double beta = 0.6;
  bool scaled_attention = false;
};

// True when temporal indices [start, start + n) exist and are consecutive epochs.
inline bool window_is_contiguous(const ReplayBuffer& buf, std::size_t start, std::size_t n) {
  if (n == 0 || start + n > buf.size()) return false;
  for (std::size_t j = 1; j < n; ++j)
    if (buf.at(start + j).epoch != buf.at(start + j - 1).epoch + 1) return false;
  return true;
}

inline std::vector<double> buffer_sampling_probabilities(const ReplayBuffer& buf,
                                                         std::span<const double> current_state,
                                                         const ReplaySampling& cfg) {
  if (cfg.alpha == 0.0) return std::vector<double>(buf.size(), 1.0 / static_cast<double>(buf.size()));
  return sampling_probabilities(
      priorities(attention_scores(current_state, buf, cfg.scaled_attention)), cfg.alpha);
}

// Draws batch_size windows of n transitions with replacement from P. A draw
// whose window is not contiguous is redrawn; sampling from P restricted to
// valid starts is the same distribution and always terminates.
inline SampledBatch sample_batch(const ReplayBuffer& buf, std::span<const double> current_state,
                                 std::size_t batch_size, std::size_t n, const ReplaySampling& cfg,
                                 Rng& rng) {
  if (n == 0) throw std::invalid_argument("window length must be positive");
  if (buf.size() < batch_size + n) throw std::invalid_argument("replay buffer too small");
  const auto probs = buffer_sampling_probabilities(buf, current_state, cfg);

  std::vector<double> cumulative(buf.size());
  double acc = 0.0;
  std::size_t last_valid = buf.size();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (window_is_contiguous(buf, i, n)) {
      acc += probs[i];
      last_valid = i;
    }
    cumulative[i] = acc;
  }
  if (last_valid == buf.size() || !(acc > 0.0))
    throw std::invalid_argument("no contiguous window available");

  SampledBatch out;
  out.window = n;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), last_valid);
    out.starts.push_back(i);
    out.probs.push_back(probs[i]);
  }
  out.weights = importance_weights(out.probs, buf.size(), cfg.beta);
  return out;
}

// CSV: index,epoch,action,reward,tau,attention,probability
inline void dump_buffer(std::ostream& os, const ReplayBuffer& buf,
                        std::span<const double> current_state, const ReplaySampling& cfg) {
  os << "index,epoch,action,reward,tau,attention,probability\n";
  if (buf.empty()) return;
  const auto att = attention_scores(current_state, buf, cfg.scaled_attention);
  const auto probs = sampling_probabilities(att, cfg.alpha);
  os.precision(17);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const auto& t = buf.at(i);
    os << i << ',' << t.epoch << ',' << static_cast<int>(t.action) << ',' << t.reward << ','
       << t.tau << ',' << att[i] << ',' << probs[i] << '\n';
  }
}

}  // namespace edgecache
