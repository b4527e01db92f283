#pragma once

// Actor-critic learner: PPO clipped surrogate with sojourn-time discounting,
// a value loss mixing 1-step and n-step targets with L2 regularization, and
// replay sampled by attention priority.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "edgecache/env.hpp"
#include "edgecache/nn.hpp"
#include "edgecache/random.hpp"
#include "edgecache/replay.hpp"

namespace edgecache {

struct PpoConfig {
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  double lambda1 = 0.5;
  double lambda2 = 1e-4;
  std::size_t n_steps = 5;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 10000;
  double alpha = 0.4;
  double beta_start = 0.6;
  double beta_end = 1.0;
  bool scaled_attention = false;
  OptimizerConfig actor_optimizer{};
  OptimizerConfig critic_optimizer{};
  std::size_t update_interval = 64;
  std::size_t updates_per_call = 1;
  double entropy_coefficient = 0.0;
  std::vector<std::size_t> hidden{128, 64};
  bool train_on_hits = true;
  bool normalize_advantages = false;
  // Conventional n-step return leaves the first reward undiscounted.
  bool conventional_n_step = false;
  std::size_t moving_average_window = 500;
};

inline void validate(const PpoConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!(c.clip_epsilon > 0.0)) throw std::invalid_argument("clip epsilon must be positive");
  if (c.lambda1 < 0.0 || c.lambda2 < 0.0) throw std::invalid_argument("lambda1/lambda2 must be >= 0");
  if (c.n_steps == 0 || c.batch_size == 0 || c.buffer_capacity == 0 || c.update_interval == 0)
    throw std::invalid_argument("n_steps, batch_size, buffer capacity and update interval must be positive");
  if (c.alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  if (c.beta_start < 0.0 || c.beta_start > 1.0 || c.beta_end < 0.0 || c.beta_end > 1.0)
    throw std::invalid_argument("beta must lie in [0, 1]");
  if (c.entropy_coefficient < 0.0) throw std::invalid_argument("entropy coefficient must be >= 0");
  if (c.hidden.empty()) throw std::invalid_argument("at least one hidden layer is required");
}

// A = r + gamma^tau V(s') - V(s)
inline double advantage(double r, double tau, double v_s, double v_next, double gamma) {
  if (!(tau > 0.0)) throw std::invalid_argument("advantage: tau must be positive");
  return r + std::pow(gamma, tau) * v_next - v_s;
}

inline double one_step_return(double r, double tau, double v_next, double gamma) {
  if (!(tau > 0.0)) throw std::invalid_argument("one_step_return: tau must be positive");
  return r + std::pow(gamma, tau) * v_next;
}

// sum_j gamma^{T_j} r_j + gamma^{T_n} v_at_n with T_j = t_1 + ... + t_j.
// The conventional variant discounts r_j by gamma^{T_{j-1}} instead.
inline double n_step_return(std::span<const double> rewards, std::span<const double> taus,
                            double v_at_n, double gamma, bool conventional = false) {
  if (rewards.size() != taus.size() || rewards.empty())
    throw std::invalid_argument("n_step_return: need n rewards and n sojourn times");
  double elapsed = 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    if (!(taus[j] > 0.0)) throw std::invalid_argument("n_step_return: tau must be positive");
    const double before = elapsed;
    elapsed += taus[j];
    total += std::pow(gamma, conventional ? before : elapsed) * rewards[j];
  }
  return total + std::pow(gamma, elapsed) * v_at_n;
}

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

inline double clipped_surrogate(double log_prob_new, double log_prob_old, double adv,
                                double epsilon) {
  const double ratio = std::exp(log_prob_new - log_prob_old);
  return std::min(ratio * adv, clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv);
}

// d/d(log_prob_new) of the clipped surrogate; zero where the clipped branch binds.
inline double clipped_surrogate_slope(double log_prob_new, double log_prob_old, double adv,
                                      double epsilon) {
  const double ratio = std::exp(log_prob_new - log_prob_old);
  const double clipped = clip(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return ratio * adv <= clipped * adv ? ratio * adv : 0.0;
}

inline constexpr std::size_t kActionCount = 2;

class ActorCritic {
 public:
  ActorCritic() = default;

  ActorCritic(std::size_t input_dim, const PpoConfig& cfg, Rng& init_rng)
      : actor(dims(input_dim, cfg.hidden, kActionCount), init_rng),
        critic(dims(input_dim, cfg.hidden, 1), init_rng) {}

  std::vector<double> policy(std::span<const double> x) const { return softmax(actor.forward(x)); }
  double value(std::span<const double> x) const { return critic.forward(x)[0]; }

  Action greedy(std::span<const double> x) const {
    const auto p = policy(x);
    return p[1] > p[0] ? Action::cache : Action::skip;
  }

  Mlp actor;
  Mlp critic;
  OptimizerState actor_state;
  OptimizerState critic_state;

 private:
  static std::vector<std::size_t> dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                       std::size_t out) {
    std::vector<std::size_t> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  }
};

// One sample of a value batch: the prediction V(s) and both regression targets.
struct ValueSample {
  double prediction;
  double one_step_target;
  double n_step_target;
  double weight;
};

// mean_b w_b [(V - R)^2 + lambda1 (G - V)^2] + lambda2 * sum of squared weights
inline double value_loss(std::span<const ValueSample> batch, double weight_square_sum,
                         double lambda1, double lambda2) {
  double total = 0.0;
  for (const auto& s : batch) {
    const double e1 = s.prediction - s.one_step_target;
    const double en = s.n_step_target - s.prediction;
    total += s.weight * (e1 * e1 + lambda1 * en * en);
  }
  const double mean = batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
  return mean + lambda2 * weight_square_sum;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_ratio = 0.0;
  double mean_weight = 0.0;
  double mean_advantage = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
};

// Per-sample quantities derived from a window with the critic frozen.
struct WindowTargets {
  double v_s;
  double advantage;
  double one_step_target;
  double n_step_target;
};

inline WindowTargets window_targets(const ActorCritic& agent, const ReplayBuffer& buf,
                                    std::size_t start, std::size_t n, const PpoConfig& cfg) {
  if (!window_is_contiguous(buf, start, n))
    throw std::invalid_argument("n-step window is not temporally contiguous");
  const Transition& first = buf.at(start);
  std::vector<double> rewards(n);
  std::vector<double> taus(n);
  for (std::size_t j = 0; j < n; ++j) {
    rewards[j] = buf.at(start + j).reward;
    taus[j] = buf.at(start + j).tau;
  }
  const double v_s = agent.value(first.state);
  const double v_next = agent.value(first.next_state);
  const double v_n = n == 1 ? v_next : agent.value(buf.at(start + n - 1).next_state);
  return {v_s, advantage(first.reward, first.tau, v_s, v_next, cfg.gamma),
          one_step_return(first.reward, first.tau, v_next, cfg.gamma),
          n_step_return(rewards, taus, v_n, cfg.gamma, cfg.conventional_n_step)};
}

// Policy and value gradients for a sampled batch (targets frozen). Exposed
// separately so the gradients can be checked against finite differences.
struct BatchGradients {
  std::vector<double> actor;
  std::vector<double> critic;
  UpdateStats stats;
};

inline BatchGradients batch_gradients(const ActorCritic& agent, const ReplayBuffer& buf,
                                      const SampledBatch& batch, const PpoConfig& cfg) {
  const std::size_t B = batch.starts.size();
  if (B == 0) throw std::invalid_argument("empty batch");
  const double inv_b = 1.0 / static_cast<double>(B);

  std::vector<WindowTargets> targets;
  targets.reserve(B);
  for (auto s : batch.starts) targets.push_back(window_targets(agent, buf, s, batch.window, cfg));

  std::vector<double> adv(B);
  for (std::size_t b = 0; b < B; ++b) adv[b] = targets[b].advantage;
  if (cfg.normalize_advantages && B > 1) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean *= inv_b;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var * inv_b);
    for (auto& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  BatchGradients out;
  out.actor.assign(agent.actor.param_count(), 0.0);
  out.critic.assign(agent.critic.param_count(), 0.0);
  auto& st = out.stats;
  Mlp::Tape tape;
  std::vector<ValueSample> values;
  values.reserve(B);

  for (std::size_t b = 0; b < B; ++b) {
    const Transition& t = buf.at(batch.starts[b]);
    const double w = batch.weights[b];
    const auto a = static_cast<std::size_t>(t.action);

    const auto logits = agent.actor.forward(t.state, tape);
    const auto logp = log_softmax(logits);
    const auto pi = softmax(logits);
    const double ratio = std::exp(logp[a] - t.log_prob_old);
    const double surr = clipped_surrogate(logp[a], t.log_prob_old, adv[b], cfg.clip_epsilon);
    const double slope = clipped_surrogate_slope(logp[a], t.log_prob_old, adv[b], cfg.clip_epsilon);
    double entropy = 0.0;
    for (std::size_t k = 0; k < pi.size(); ++k) entropy -= pi[k] * logp[k];

    std::vector<double> up(pi.size());
    for (std::size_t k = 0; k < pi.size(); ++k) {
      const double dlogp = (k == a ? 1.0 : 0.0) - pi[k];
      const double dentropy = -pi[k] * (logp[k] + entropy);
      up[k] = -inv_b * (w * slope * dlogp + cfg.entropy_coefficient * dentropy);
    }
    agent.actor.backward(tape, up, out.actor);

    st.policy_loss -= inv_b * (w * surr + cfg.entropy_coefficient * entropy);
    st.mean_ratio += inv_b * ratio;
    st.mean_weight += inv_b * w;
    st.mean_advantage += inv_b * adv[b];
    st.entropy += inv_b * entropy;
    if (std::abs(ratio - 1.0) > cfg.clip_epsilon) st.clip_fraction += inv_b;

    const auto& tg = targets[b];
    agent.critic.forward(t.state, tape);
    const double v = tg.v_s;
    const double dv = inv_b * w * (2.0 * (v - tg.one_step_target) + 2.0 * cfg.lambda1 * (v - tg.n_step_target));
    const double upv[1] = {dv};
    agent.critic.backward(tape, upv, out.critic);
    values.push_back({v, tg.one_step_target, tg.n_step_target, w});
  }

  if (cfg.lambda2 > 0.0) {
    const auto mask = agent.critic.weight_mask();
    const auto& p = agent.critic.params();
    for (std::size_t i = 0; i < p.size(); ++i)
      if (mask[i]) out.critic[i] += 2.0 * cfg.lambda2 * p[i];
  }
  st.value_loss = value_loss(values, agent.critic.weight_square_sum(), cfg.lambda1, cfg.lambda2);
  if (!std::isfinite(st.policy_loss) || !std::isfinite(st.value_loss))
    throw Divergence("non-finite loss");
  return out;
}

inline UpdateStats learner_update_on_batch(ActorCritic& agent, const ReplayBuffer& buf,
                                           const SampledBatch& batch, const PpoConfig& cfg) {
  auto g = batch_gradients(agent, buf, batch, cfg);
  apply_update(agent.actor, g.actor, agent.actor_state, cfg.actor_optimizer);
  apply_update(agent.critic, g.critic, agent.critic_state, cfg.critic_optimizer);
  return g.stats;
}

inline UpdateStats learner_update(ActorCritic& agent, const ReplayBuffer& buf,
                                  std::span<const double> current_state, const PpoConfig& cfg,
                                  double beta, Rng& rng) {
  const ReplaySampling sampling{cfg.alpha, beta, cfg.scaled_attention};
  const auto batch = sample_batch(buf, current_state, cfg.batch_size, cfg.n_steps, sampling, rng);
  return learner_update_on_batch(agent, buf, batch, cfg);
}

inline double annealed_beta(const PpoConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return cfg.beta_end;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac;
}

struct CurvePoint {
  std::size_t step;
  double reward;
  double moving_average;
};

// Trailing mean over the last `window` rewards (fewer at the start).
class MovingAverage {
 public:
  explicit MovingAverage(std::size_t window) : window_(std::max<std::size_t>(window, 1)) {}

  double push(double x) {
    values_.push_back(x);
    sum_ += x;
    if (values_.size() > window_) {
      sum_ -= values_[values_.size() - window_ - 1];
    }
    const auto n = std::min(values_.size(), window_);
    return sum_ / static_cast<double>(n);
  }

 private:
  std::size_t window_;
  std::vector<double> values_;
  double sum_ = 0.0;
};

struct TrainResult {
  ActorCritic agent;
  std::vector<CurvePoint> curve;
  std::size_t updates = 0;
  UpdateStats last_stats;
};

// Salts for the agent's independent random streams.
enum AgentStream : std::uint32_t { init_stream = 0, action_stream = 1, replay_stream = 2 };

inline TrainResult train(Environment& env, const PpoConfig& cfg, std::size_t total_steps,
                         std::uint64_t seed) {
  validate(cfg);
  Rng init_rng = make_rng(seed, SeedStream::agent, init_stream);
  Rng action_rng = make_rng(seed, SeedStream::agent, action_stream);
  Rng replay_rng = make_rng(seed, SeedStream::agent, replay_stream);

  TrainResult result{ActorCritic(env.observation().flat_size(), cfg, init_rng), {}, 0, {}};
  auto& agent = result.agent;
  ReplayBuffer buffer(cfg.buffer_capacity);
  MovingAverage avg(cfg.moving_average_window);
  result.curve.reserve(total_steps);

  auto state = env.flat_observation();
  for (std::size_t step = 1; step <= total_steps; ++step) {
    const auto logits = agent.actor.forward(state);
    const auto probs = softmax(logits);
    const auto logp = log_softmax(logits);
    Action a = uniform01(action_rng) < probs[1] ? Action::cache : Action::skip;
    const bool hit = env.pending_hit();
    if (hit) a = Action::skip;
    const auto out = env.act(a);
    auto next = flatten(out.next_state, env.scale());

    if (!hit || cfg.train_on_hits) {
      const auto idx = static_cast<std::size_t>(out.action);
      buffer.push({state, out.action, logp[idx], out.reward, out.tau, next, step});
    }
    result.curve.push_back({step, out.reward, avg.push(out.reward)});
    state = std::move(next);

    if (step % cfg.update_interval == 0 && buffer.size() >= cfg.batch_size + cfg.n_steps) {
      const double beta = annealed_beta(cfg, step, total_steps);
      for (std::size_t u = 0; u < cfg.updates_per_call; ++u) {
        result.last_stats = learner_update(agent, buffer, state, cfg, beta, replay_rng);
        ++result.updates;
      }
    }
  }
  return result;
}

}  // namespace edgecache
