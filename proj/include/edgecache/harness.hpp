#pragma once

// Experiment configuration, evaluation protocol, sweeps, paired ablations and
// CSV export.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgecache/baselines.hpp"
#include "edgecache/env.hpp"
#include "edgecache/ppo.hpp"
#include "edgecache/workload.hpp"

namespace edgecache {

struct ExperimentConfig {
  std::string experiment = "run";
  // Catalog and workload.
  std::size_t file_count = 50;
  double eta = 0.8;
  AttributeRanges ranges{};
  double request_rate = 0.2;
  std::string catalog_file;
  // Cache and environment.
  EnvConfig env{};
  // Agent.
  std::string policy = "ppo";
  PpoConfig ppo{};
  std::size_t training_steps = 20000;
  // Evaluation.
  std::size_t eval_requests = 1000;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "results";
  bool write_trajectories = false;
  std::size_t workers = 0;  // 0: hardware concurrency
};

// --- JSON config -----------------------------------------------------------

namespace detail {

inline nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.low, r.high}); }

inline Range range_from(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument(key + " must be [low, high]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::string mode_name(DecisionMode m) { return m == DecisionMode::smdp ? "smdp" : "slotted"; }

inline DecisionMode parse_mode(const std::string& s) {
  if (s == "smdp") return DecisionMode::smdp;
  if (s == "slotted" || s == "mdp") return DecisionMode::slotted;
  throw std::invalid_argument("unknown decision mode '" + s + "'");
}

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

}  // namespace detail

// Every resolved parameter, keyed by its symbol name.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["experiment"] = c.experiment;
  j["F"] = c.file_count;
  j["eta"] = c.eta;
  j["lifetime_range"] = detail::range_json(c.ranges.lifetime);
  j["size_range"] = detail::range_json(c.ranges.size);
  j["importance_range"] = detail::range_json(c.ranges.importance);
  j["lambda"] = c.request_rate;
  j["catalog_file"] = c.catalog_file;
  j["M"] = c.env.capacity;
  j["utility_k"] = c.env.utility_k;
  j["N"] = c.env.history;
  j["w1"] = c.env.w1;
  j["w2"] = c.env.w2;
  j["mode"] = detail::mode_name(c.env.mode);
  j["slot_length"] = c.env.slot_length;
  j["policy"] = c.policy;
  j["gamma"] = c.ppo.gamma;
  j["epsilon"] = c.ppo.clip_epsilon;
  j["lambda1"] = c.ppo.lambda1;
  j["lambda2"] = c.ppo.lambda2;
  j["n"] = c.ppo.n_steps;
  j["batch_size"] = c.ppo.batch_size;
  j["replay_capacity"] = c.ppo.buffer_capacity;
  j["alpha"] = c.ppo.alpha;
  j["beta_start"] = c.ppo.beta_start;
  j["beta_end"] = c.ppo.beta_end;
  j["scaled_attention"] = c.ppo.scaled_attention;
  j["optimizer"] = detail::optimizer_name(c.ppo.actor_optimizer.kind);
  j["actor_learning_rate"] = c.ppo.actor_optimizer.learning_rate;
  j["critic_learning_rate"] = c.ppo.critic_optimizer.learning_rate;
  j["adam_beta1"] = c.ppo.actor_optimizer.beta1;
  j["adam_beta2"] = c.ppo.actor_optimizer.beta2;
  j["adam_epsilon"] = c.ppo.actor_optimizer.epsilon;
  j["update_interval"] = c.ppo.update_interval;
  j["updates_per_call"] = c.ppo.updates_per_call;
  j["entropy_coefficient"] = c.ppo.entropy_coefficient;
  j["hidden"] = c.ppo.hidden;
  j["train_on_hits"] = c.ppo.train_on_hits;
  j["normalize_advantages"] = c.ppo.normalize_advantages;
  j["conventional_n_step"] = c.ppo.conventional_n_step;
  j["moving_average_window"] = c.ppo.moving_average_window;
  j["training_steps"] = c.training_steps;
  j["eval_requests"] = c.eval_requests;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["write_trajectories"] = c.write_trajectories;
  j["workers"] = c.workers;
  return j;
}

// Applies the keys present in j on top of base; unknown keys are rejected.
inline ExperimentConfig apply_json(ExperimentConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  using Setter = std::function<void(const nlohmann::json&)>;
  const std::map<std::string, Setter> setters{
      {"experiment", [&](auto& v) { c.experiment = v.template get<std::string>(); }},
      {"F", [&](auto& v) { c.file_count = v.template get<std::size_t>(); }},
      {"eta", [&](auto& v) { c.eta = v.template get<double>(); }},
      {"lifetime_range", [&](auto& v) { c.ranges.lifetime = detail::range_from(v, "lifetime_range"); }},
      {"size_range", [&](auto& v) { c.ranges.size = detail::range_from(v, "size_range"); }},
      {"importance_range", [&](auto& v) { c.ranges.importance = detail::range_from(v, "importance_range"); }},
      {"lambda", [&](auto& v) { c.request_rate = v.template get<double>(); }},
      {"catalog_file", [&](auto& v) { c.catalog_file = v.template get<std::string>(); }},
      {"M", [&](auto& v) { c.env.capacity = v.template get<double>(); }},
      {"utility_k", [&](auto& v) { c.env.utility_k = v.template get<double>(); }},
      {"N", [&](auto& v) { c.env.history = v.template get<std::size_t>(); }},
      {"w1", [&](auto& v) { c.env.w1 = v.template get<double>(); }},
      {"w2", [&](auto& v) { c.env.w2 = v.template get<double>(); }},
      {"mode", [&](auto& v) { c.env.mode = detail::parse_mode(v.template get<std::string>()); }},
      {"slot_length", [&](auto& v) { c.env.slot_length = v.template get<double>(); }},
      {"policy", [&](auto& v) { c.policy = v.template get<std::string>(); }},
      {"gamma", [&](auto& v) { c.ppo.gamma = v.template get<double>(); }},
      {"epsilon", [&](auto& v) { c.ppo.clip_epsilon = v.template get<double>(); }},
      {"lambda1", [&](auto& v) { c.ppo.lambda1 = v.template get<double>(); }},
      {"lambda2", [&](auto& v) { c.ppo.lambda2 = v.template get<double>(); }},
      {"n", [&](auto& v) { c.ppo.n_steps = v.template get<std::size_t>(); }},
      {"batch_size", [&](auto& v) { c.ppo.batch_size = v.template get<std::size_t>(); }},
      {"replay_capacity", [&](auto& v) { c.ppo.buffer_capacity = v.template get<std::size_t>(); }},
      {"alpha", [&](auto& v) { c.ppo.alpha = v.template get<double>(); }},
      {"beta_start", [&](auto& v) { c.ppo.beta_start = v.template get<double>(); }},
      {"beta_end", [&](auto& v) { c.ppo.beta_end = v.template get<double>(); }},
      {"scaled_attention", [&](auto& v) { c.ppo.scaled_attention = v.template get<bool>(); }},
      {"optimizer",
       [&](auto& v) {
         c.ppo.actor_optimizer.kind = c.ppo.critic_optimizer.kind =
             detail::parse_optimizer(v.template get<std::string>());
       }},
      {"actor_learning_rate", [&](auto& v) { c.ppo.actor_optimizer.learning_rate = v.template get<double>(); }},
      {"critic_learning_rate", [&](auto& v) { c.ppo.critic_optimizer.learning_rate = v.template get<double>(); }},
      {"adam_beta1", [&](auto& v) { c.ppo.actor_optimizer.beta1 = c.ppo.critic_optimizer.beta1 = v.template get<double>(); }},
      {"adam_beta2", [&](auto& v) { c.ppo.actor_optimizer.beta2 = c.ppo.critic_optimizer.beta2 = v.template get<double>(); }},
      {"adam_epsilon", [&](auto& v) { c.ppo.actor_optimizer.epsilon = c.ppo.critic_optimizer.epsilon = v.template get<double>(); }},
      {"update_interval", [&](auto& v) { c.ppo.update_interval = v.template get<std::size_t>(); }},
      {"updates_per_call", [&](auto& v) { c.ppo.updates_per_call = v.template get<std::size_t>(); }},
      {"entropy_coefficient", [&](auto& v) { c.ppo.entropy_coefficient = v.template get<double>(); }},
      {"hidden", [&](auto& v) { c.ppo.hidden = v.template get<std::vector<std::size_t>>(); }},
      {"train_on_hits", [&](auto& v) { c.ppo.train_on_hits = v.template get<bool>(); }},
      {"normalize_advantages", [&](auto& v) { c.ppo.normalize_advantages = v.template get<bool>(); }},
      {"conventional_n_step", [&](auto& v) { c.ppo.conventional_n_step = v.template get<bool>(); }},
      {"moving_average_window", [&](auto& v) { c.ppo.moving_average_window = v.template get<std::size_t>(); }},
      {"training_steps", [&](auto& v) { c.training_steps = v.template get<std::size_t>(); }},
      {"eval_requests", [&](auto& v) { c.eval_requests = v.template get<std::size_t>(); }},
      {"seeds", [&](auto& v) { c.seeds = v.template get<std::vector<std::uint64_t>>(); }},
      {"output_dir", [&](auto& v) { c.output_dir = v.template get<std::string>(); }},
      {"write_trajectories", [&](auto& v) { c.write_trajectories = v.template get<bool>(); }},
      {"workers", [&](auto& v) { c.workers = v.template get<std::size_t>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

inline void validate(const ExperimentConfig& c) {
  if (c.file_count == 0) throw std::invalid_argument("F must be positive");
  if (!(c.eta >= 0.0 && c.eta <= 1.0)) throw std::invalid_argument("eta must lie in [0, 1]");
  validate_ranges(c.ranges);
  if (!(c.request_rate > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (!(c.env.capacity > 0.0)) throw std::invalid_argument("M must be positive");
  if (c.env.history == 0) throw std::invalid_argument("N must be positive");
  if (!(c.env.slot_length > 0.0)) throw std::invalid_argument("slot_length must be positive");
  if (c.eval_requests == 0) throw std::invalid_argument("eval_requests must be positive");
  if (c.seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (c.policy != "ppo" && c.policy != "uniform-ppo" && !parse_heuristic(c.policy))
    throw std::invalid_argument("unknown policy '" + c.policy + "'");
  validate(c.ppo);
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config '" + path + "': " + e.what());
  }
  auto c = apply_json(std::move(base), j);
  validate(c);
  return c;
}

// Output directory, overridable through EDGECACHE_OUTPUT_DIR.
inline std::string resolved_output_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv("EDGECACHE_OUTPUT_DIR"); env && *env) return env;
  return c.output_dir;
}

// FNV-1a over the canonical JSON dump.
inline std::string fingerprint(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Small-catalog setting for ablations that must finish on a desk machine:
// F = 15 with a cache holding roughly 30% of the catalog by size.
inline ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.experiment = "desk";
  c.file_count = 15;
  c.eta = 0.8;
  c.request_rate = 1.0;
  c.env.capacity = 2500.0;
  c.env.history = 100;
  c.ppo.buffer_capacity = 10000;
  c.ppo.update_interval = 8;
  c.ppo.normalize_advantages = true;
  c.training_steps = 20000;
  c.eval_requests = 1000;
  c.seeds = {1, 2, 3, 4, 5};
  return c;
}

// --- Running experiments -----------------------------------------------------

struct EvaluationReport {
  std::string experiment;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double lambda = 0.0;
  double capacity = 0.0;
  std::string policy;
  std::size_t hit_count = 0;
  double total_utility = 0.0;
  std::size_t training_steps = 0;
  std::size_t requests = 0;
  std::string config_fingerprint;
  std::vector<CurvePoint> curve;
  std::string trajectory_csv;

  friend bool operator==(const EvaluationReport& a, const EvaluationReport& b) {
    return a.experiment == b.experiment && a.seed == b.seed && a.eta == b.eta &&
           a.lambda == b.lambda && a.capacity == b.capacity && a.policy == b.policy &&
           a.hit_count == b.hit_count && a.total_utility == b.total_utility &&
           a.training_steps == b.training_steps;
  }
};

inline FileCatalog make_catalog(const ExperimentConfig& c, std::uint64_t seed) {
  if (!c.catalog_file.empty()) return load_catalog(c.catalog_file, c.eta, c.ranges);
  return generate_catalog(c.file_count, c.eta, derive_seed(seed, SeedStream::catalog), c.ranges);
}

inline Environment make_environment(const ExperimentConfig& c, const FileCatalog& catalog,
                                    std::uint64_t stream_seed) {
  return Environment(catalog, c.env,
                     std::make_unique<PoissonZipfSource>(catalog, c.request_rate, stream_seed));
}

inline bool is_learned(const std::string& policy) {
  return policy == "ppo" || policy == "uniform-ppo";
}

inline PpoConfig agent_config(const ExperimentConfig& c) {
  return c.policy == "uniform-ppo" ? uniform_ppo(c.ppo) : c.ppo;
}

struct TrainedPolicy {
  std::unique_ptr<Policy> policy;
  std::vector<CurvePoint> curve;
};

inline TrainedPolicy prepare_policy(const ExperimentConfig& c, const FileCatalog& catalog,
                                    std::uint64_t seed) {
  if (auto kind = parse_heuristic(c.policy)) return {heuristic(*kind, catalog.count()), {}};
  if (!is_learned(c.policy)) throw std::invalid_argument("unknown policy '" + c.policy + "'");
  auto env = make_environment(c, catalog, derive_seed(seed, SeedStream::workload));
  auto result = train(env, agent_config(c), c.training_steps, seed);
  auto agent = std::make_shared<const ActorCritic>(std::move(result.agent));
  return {std::make_unique<PpoPolicy>(std::move(agent), c.policy), std::move(result.curve)};
}

// Evaluation starts from an empty cache on a stream disjoint from training.
inline EvaluationReport run_experiment(const ExperimentConfig& c, std::uint64_t seed) {
  validate(c);
  const auto fp = fingerprint(c);
  try {
    const auto catalog = make_catalog(c, seed);
    auto trained = prepare_policy(c, catalog, seed);
    auto env = make_environment(c, catalog, derive_seed(seed, SeedStream::evaluation));
    std::ostringstream traj;
    std::unique_ptr<TrajectoryLog> log;
    if (c.write_trajectories) log = std::make_unique<TrajectoryLog>(traj);
    const auto run = evaluate_policy(env, *trained.policy, c.eval_requests, log.get());

    EvaluationReport r;
    r.experiment = c.experiment;
    r.seed = seed;
    r.eta = c.eta;
    r.lambda = c.request_rate;
    r.capacity = c.env.capacity;
    r.policy = c.policy;
    r.hit_count = run.hit_count;
    r.total_utility = run.total_utility;
    r.training_steps = is_learned(c.policy) ? c.training_steps : 0;
    r.requests = run.requests;
    r.config_fingerprint = fp;
    r.curve = std::move(trained.curve);
    r.trajectory_csv = traj.str();
    return r;
  } catch (const Divergence& e) {
    throw Divergence(std::string(e.what()) + " [config " + fp + ", seed " + std::to_string(seed) + "]");
  }
}

// Runs jobs 0..count-1 on a pool of workers; results land in job order.
template <typename T>
std::vector<T> parallel_map(std::size_t count, std::size_t workers,
                            const std::function<T(std::size_t)>& job) {
  std::vector<T> out(count);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        out[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<EvaluationReport> run_seeds(const ExperimentConfig& c) {
  return parallel_map<EvaluationReport>(c.seeds.size(), c.workers,
                                        [&](std::size_t i) { return run_experiment(c, c.seeds[i]); });
}

enum class SweepAxis { eta, lambda, cache_size };

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "eta") return SweepAxis::eta;
  if (s == "lambda") return SweepAxis::lambda;
  if (s == "cache" || s == "cache_size" || s == "M") return SweepAxis::cache_size;
  throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

inline std::string axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::eta: return "eta";
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::cache_size: return "M";
  }
  return "?";
}

inline ExperimentConfig with_axis(ExperimentConfig c, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::eta: c.eta = value; break;
    case SweepAxis::lambda: c.request_rate = value; break;
    case SweepAxis::cache_size: c.env.capacity = value; break;
  }
  return c;
}

struct SweepPoint {
  double value = 0.0;
  double mean_hits = 0.0;
  double sd_hits = 0.0;
  double mean_utility = 0.0;
  double sd_utility = 0.0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::eta;
  std::vector<SweepPoint> points;
  std::vector<EvaluationReport> reports;
};

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return {m, sd};
}

inline SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                             const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  validate(base);
  const std::size_t seeds = base.seeds.size();
  SweepResult res;
  res.axis = axis;
  res.reports = parallel_map<EvaluationReport>(values.size() * seeds, base.workers, [&](std::size_t i) {
    auto c = with_axis(base, axis, values[i / seeds]);
    c.experiment = base.experiment + "-" + axis_name(axis);
    return run_experiment(c, base.seeds[i % seeds]);
  });
  for (std::size_t v = 0; v < values.size(); ++v) {
    std::vector<double> hits, util;
    for (std::size_t s = 0; s < seeds; ++s) {
      hits.push_back(static_cast<double>(res.reports[v * seeds + s].hit_count));
      util.push_back(res.reports[v * seeds + s].total_utility);
    }
    SweepPoint p{values[v]};
    std::tie(p.mean_hits, p.sd_hits) = mean_sd(hits);
    std::tie(p.mean_utility, p.sd_utility) = mean_sd(util);
    res.points.push_back(p);
  }
  return res;
}

// First step whose moving average reaches the plateau minus 10% of its
// magnitude (90% of a positive plateau). Plateau: mean of the last 10% of the
// moving-average curve. Returns curve.size() + 1 if never reached.
struct ConvergenceStats {
  double plateau = 0.0;
  double threshold = 0.0;
  std::size_t steps_to_threshold = 0;
};

inline ConvergenceStats convergence_stats(const std::vector<CurvePoint>& curve) {
  ConvergenceStats s;
  if (curve.empty()) return s;
  const std::size_t tail = std::max<std::size_t>(1, curve.size() / 10);
  for (std::size_t i = curve.size() - tail; i < curve.size(); ++i) s.plateau += curve[i].moving_average;
  s.plateau /= static_cast<double>(tail);
  s.threshold = s.plateau - 0.1 * std::abs(s.plateau);
  s.steps_to_threshold = curve.size() + 1;
  for (const auto& p : curve)
    if (p.moving_average >= s.threshold) {
      s.steps_to_threshold = p.step;
      break;
    }
  return s;
}

struct ConvergenceRun {
  std::uint64_t seed = 0;
  ConvergenceStats enhanced;
  ConvergenceStats uniform;
  std::vector<CurvePoint> enhanced_curve;
  std::vector<CurvePoint> uniform_curve;
};

struct ConvergenceComparison {
  std::vector<ConvergenceRun> runs;
  std::size_t enhanced_faster = 0;
};

// Trains attention-prioritized and uniform-replay PPO on identical seeds and
// workloads (config.ppo is the enhanced arm).
inline ConvergenceComparison run_convergence_comparison(const ExperimentConfig& c) {
  validate(c);
  const auto n = c.seeds.size();
  auto curves = parallel_map<std::vector<CurvePoint>>(2 * n, c.workers, [&](std::size_t i) {
    const auto seed = c.seeds[i / 2];
    const auto catalog = make_catalog(c, seed);
    auto env = make_environment(c, catalog, derive_seed(seed, SeedStream::workload));
    const auto cfg = i % 2 == 0 ? c.ppo : uniform_ppo(c.ppo);
    return train(env, cfg, c.training_steps, seed).curve;
  });
  ConvergenceComparison out;
  for (std::size_t s = 0; s < n; ++s) {
    ConvergenceRun r;
    r.seed = c.seeds[s];
    r.enhanced_curve = std::move(curves[2 * s]);
    r.uniform_curve = std::move(curves[2 * s + 1]);
    r.enhanced = convergence_stats(r.enhanced_curve);
    r.uniform = convergence_stats(r.uniform_curve);
    if (r.enhanced.steps_to_threshold < r.uniform.steps_to_threshold) ++out.enhanced_faster;
    out.runs.push_back(std::move(r));
  }
  return out;
}

struct ModeComparisonRow {
  double lambda = 0.0;
  std::vector<EvaluationReport> smdp;
  std::vector<EvaluationReport> slotted;
  double mean_smdp = 0.0;
  double mean_slotted = 0.0;
};

// Same learner and evaluation protocol under per-request and slotted epochs.
inline std::vector<ModeComparisonRow> run_mode_comparison(const ExperimentConfig& base,
                                                          const std::vector<double>& lambdas) {
  validate(base);
  const auto n = base.seeds.size();
  auto reports = parallel_map<EvaluationReport>(lambdas.size() * 2 * n, base.workers, [&](std::size_t i) {
    auto c = with_axis(base, SweepAxis::lambda, lambdas[i / (2 * n)]);
    const bool slotted = (i / n) % 2 == 1;
    c.env = slotted ? slotted_mdp(c.env, base.env.slot_length) : c.env;
    if (!slotted) c.env.mode = DecisionMode::smdp;
    c.experiment = base.experiment + (slotted ? "-slotted" : "-smdp");
    return run_experiment(c, base.seeds[i % n]);
  });
  std::vector<ModeComparisonRow> rows;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    ModeComparisonRow row;
    row.lambda = lambdas[l];
    std::vector<double> a, b;
    for (std::size_t s = 0; s < n; ++s) {
      row.smdp.push_back(reports[l * 2 * n + s]);
      row.slotted.push_back(reports[l * 2 * n + n + s]);
      a.push_back(static_cast<double>(row.smdp.back().hit_count));
      b.push_back(static_cast<double>(row.slotted.back().hit_count));
    }
    row.mean_smdp = mean_sd(a).first;
    row.mean_slotted = mean_sd(b).first;
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- Export ------------------------------------------------------------------

inline constexpr const char* kResultsHeader =
    "experiment,seed,eta,lambda,M,policy,hit_count,total_utility,training_steps";

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_results_csv(std::ostream& os, const std::vector<EvaluationReport>& reports) {
  os << kResultsHeader << '\n';
  for (const auto& r : reports)
    os << r.experiment << ',' << r.seed << ',' << format_double(r.eta) << ','
       << format_double(r.lambda) << ',' << format_double(r.capacity) << ',' << r.policy << ','
       << r.hit_count << ',' << format_double(r.total_utility) << ',' << r.training_steps << '\n';
}

inline std::vector<EvaluationReport> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader)
    throw std::runtime_error("results CSV: unexpected header");
  std::vector<EvaluationReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 9) throw std::runtime_error("results CSV: malformed row '" + line + "'");
    EvaluationReport r;
    r.experiment = cells[0];
    r.seed = std::stoull(cells[1]);
    r.eta = std::stod(cells[2]);
    r.lambda = std::stod(cells[3]);
    r.capacity = std::stod(cells[4]);
    r.policy = cells[5];
    r.hit_count = std::stoull(cells[6]);
    r.total_utility = std::stod(cells[7]);
    r.training_steps = std::stoull(cells[8]);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "step,reward,moving_average\n";
  for (const auto& p : curve)
    os << p.step << ',' << format_double(p.reward) << ',' << format_double(p.moving_average) << '\n';
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw std::runtime_error("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

inline void check_written(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace detail

// Writes <dir>/results.csv, <dir>/config.json and one curve (and optional
// trajectory) CSV per learned run under <dir>/curves and <dir>/trajectories.
inline void export_results(const std::vector<EvaluationReport>& reports, const std::string& dir,
                           const ExperimentConfig* config = nullptr) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  {
    const auto path = root / "results.csv";
    auto os = detail::open_output(path);
    write_results_csv(os, reports);
    detail::check_written(os, path);
  }
  if (config) {
    const auto path = root / "config.json";
    auto os = detail::open_output(path);
    auto j = to_json(*config);
    j["fingerprint"] = fingerprint(*config);
    os << j.dump(2) << '\n';
    detail::check_written(os, path);
  }
  for (const auto& r : reports) {
    const std::string stem = r.experiment + "_" + r.policy + "_eta" + format_double(r.eta) + "_lambda" +
                             format_double(r.lambda) + "_M" + format_double(r.capacity) + "_seed" +
                             std::to_string(r.seed);
    if (!r.curve.empty()) {
      const auto path = root / "curves" / (stem + ".csv");
      auto os = detail::open_output(path);
      write_curve_csv(os, r.curve);
      detail::check_written(os, path);
    }
    if (!r.trajectory_csv.empty()) {
      const auto path = root / "trajectories" / (stem + ".csv");
      auto os = detail::open_output(path);
      os << r.trajectory_csv;
      detail::check_written(os, path);
    }
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
  os << axis_name(s.axis) << ",mean_hits,sd_hits,mean_utility,sd_utility\n";
  for (const auto& p : s.points)
    os << format_double(p.value) << ',' << format_double(p.mean_hits) << ',' << format_double(p.sd_hits)
       << ',' << format_double(p.mean_utility) << ',' << format_double(p.sd_utility) << '\n';
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceComparison& c) {
  os << "seed,enhanced_steps,uniform_steps,enhanced_plateau,uniform_plateau\n";
  for (const auto& r : c.runs)
    os << r.seed << ',' << r.enhanced.steps_to_threshold << ',' << r.uniform.steps_to_threshold << ','
       << format_double(r.enhanced.plateau) << ',' << format_double(r.uniform.plateau) << '\n';
}

inline void write_mode_comparison_csv(std::ostream& os, const std::vector<ModeComparisonRow>& rows) {
  os << "lambda,mean_smdp_hits,mean_slotted_hits\n";
  for (const auto& r : rows)
    os << format_double(r.lambda) << ',' << format_double(r.mean_smdp) << ','
       << format_double(r.mean_slotted) << '\n';
}

}  // namespace edgecache
