#pragma once

// Decision policies sharing one evaluation loop, plus an exhaustive
// clairvoyant bound for tiny traces.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "edgecache/cache.hpp"
#include "edgecache/env.hpp"
#include "edgecache/ppo.hpp"

namespace edgecache {

struct DecisionContext {
  const StateVector& state;
  std::span<const double> features;
  FileId file;
  double time;
  bool hit;
  const CacheState& cache;
  const FileCatalog& catalog;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual Action decide(const DecisionContext& ctx) = 0;
  virtual void observe(const StepOutcome&) {}
  // Empty means the cache's default lowest-utility order.
  virtual EvictionRank eviction() const { return {}; }
};

class NeverCache final : public Policy {
 public:
  std::string name() const override { return "never-cache"; }
  Action decide(const DecisionContext&) override { return Action::skip; }
};

class AlwaysCache final : public Policy {
 public:
  std::string name() const override { return "always-cache"; }
  Action decide(const DecisionContext&) override { return Action::cache; }
};

// Always admits; evicts the least recently requested entry.
class LruPolicy final : public Policy {
 public:
  explicit LruPolicy(std::size_t file_count) : last_(file_count, -1.0) {}
  std::string name() const override { return "lru"; }
  Action decide(const DecisionContext&) override { return Action::cache; }
  void observe(const StepOutcome& o) override {
    for (const auto& s : o.served) last_.at(s.file) = s.arrival;
  }
  EvictionRank eviction() const override {
    return [this](const CacheEntry& e, double) { return last_.at(e.file); };
  }

 private:
  std::vector<double> last_;
};

// Always admits; evicts the least frequently requested entry.
class LfuPolicy final : public Policy {
 public:
  explicit LfuPolicy(std::size_t file_count) : count_(file_count, 0.0) {}
  std::string name() const override { return "lfu"; }
  Action decide(const DecisionContext&) override { return Action::cache; }
  void observe(const StepOutcome& o) override {
    for (const auto& s : o.served) count_.at(s.file) += 1.0;
  }
  EvictionRank eviction() const override {
    return [this](const CacheEntry& e, double) { return count_.at(e.file); };
  }

 private:
  std::vector<double> count_;
};

// Admits when no live entry must go, or when the newcomer's utility exceeds
// the smallest utility among the live entries it would displace.
class GreedyUtility final : public Policy {
 public:
  std::string name() const override { return "greedy-utility"; }
  Action decide(const DecisionContext& ctx) override {
    if (ctx.hit) return Action::skip;
    if (ctx.catalog.size[ctx.file] > ctx.cache.capacity()) return Action::skip;
    CacheState trial = ctx.cache;
    trial.purge_expired(ctx.time);
    const auto evicted = trial.insert_with_eviction(ctx.file, ctx.time, ctx.catalog);
    if (evicted.empty()) return Action::cache;
    double lowest = 1e300;
    for (auto f : evicted)
      lowest = std::min(lowest, ctx.cache.entry_utility(ctx.cache.entries().at(f), ctx.time));
    const double incoming = utility(0.0, ctx.catalog.importance[ctx.file], ctx.cache.utility_k());
    return incoming > lowest ? Action::cache : Action::skip;
  }
};

// Frozen actor evaluated greedily.
class PpoPolicy final : public Policy {
 public:
  PpoPolicy(std::shared_ptr<const ActorCritic> agent, std::string label)
      : agent_(std::move(agent)), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  Action decide(const DecisionContext& ctx) override { return agent_->greedy(ctx.features); }

 private:
  std::shared_ptr<const ActorCritic> agent_;
  std::string label_;
};

enum class HeuristicKind { lru, lfu, greedy_utility, always_cache, never_cache };

inline std::unique_ptr<Policy> heuristic(HeuristicKind kind, std::size_t file_count) {
  switch (kind) {
    case HeuristicKind::lru: return std::make_unique<LruPolicy>(file_count);
    case HeuristicKind::lfu: return std::make_unique<LfuPolicy>(file_count);
    case HeuristicKind::greedy_utility: return std::make_unique<GreedyUtility>();
    case HeuristicKind::always_cache: return std::make_unique<AlwaysCache>();
    case HeuristicKind::never_cache: return std::make_unique<NeverCache>();
  }
  throw std::invalid_argument("unknown heuristic");
}

inline std::optional<HeuristicKind> parse_heuristic(const std::string& name) {
  if (name == "lru") return HeuristicKind::lru;
  if (name == "lfu") return HeuristicKind::lfu;
  if (name == "greedy-utility") return HeuristicKind::greedy_utility;
  if (name == "always-cache") return HeuristicKind::always_cache;
  if (name == "never-cache") return HeuristicKind::never_cache;
  return std::nullopt;
}

// PPO with uniform replay and unit importance weights.
inline PpoConfig uniform_ppo(PpoConfig cfg) {
  cfg.alpha = 0.0;
  cfg.beta_start = 0.0;
  cfg.beta_end = 0.0;
  return cfg;
}

// Environment settings for the fixed-slot decision ablation.
inline EnvConfig slotted_mdp(EnvConfig cfg, double slot_length = 1.0) {
  if (!(slot_length > 0.0)) throw std::invalid_argument("slot length must be positive");
  cfg.mode = DecisionMode::slotted;
  cfg.slot_length = slot_length;
  return cfg;
}

struct EvaluationRun {
  std::size_t requests = 0;
  std::size_t hit_count = 0;
  double total_utility = 0.0;
  std::size_t epochs = 0;
};

// Drives env with policy until `requests` requests have been served.
inline EvaluationRun evaluate_policy(Environment& env, Policy& policy, std::size_t requests,
                                     TrajectoryLog* log = nullptr) {
  EvaluationRun run;
  while (run.requests < requests) {
    const auto features = env.flat_observation();
    const DecisionContext ctx{env.observation(), features, env.pending_file(), env.now(),
                              env.pending_hit(), env.cache(), env.catalog()};
    const Action a = policy.decide(ctx);
    const auto out = env.act(a, policy.eviction());
    policy.observe(out);
    if (log) log->record(out);
    ++run.epochs;
    for (const auto& s : out.served) {
      if (run.requests == requests) break;
      ++run.requests;
      if (s.hit) {
        ++run.hit_count;
        run.total_utility += s.utility;
      }
    }
  }
  return run;
}

// Maximum hit count over every caching decision sequence on a recorded
// trace, with per-request decisions and lowest-utility eviction. Memoized
// exhaustive search; meant for tiny instances.
class ClairvoyantOracle {
 public:
  ClairvoyantOracle(FileCatalog catalog, double capacity, double utility_k,
                    std::size_t state_budget = 5'000'000)
      : catalog_(std::move(catalog)), capacity_(capacity), k_(utility_k), budget_(state_budget) {}

  std::size_t max_hits(const std::vector<Request>& trace) {
    times_.clear();
    files_.clear();
    double t = 0.0;
    for (const auto& r : trace) {
      t += r.interarrival;
      times_.push_back(t);
      files_.push_back(r.file);
    }
    memo_.clear();
    // When the whole catalog fits, nothing is ever evicted and files are
    // independent; caching on every miss keeps each copy as fresh as possible.
    double total = 0.0;
    for (double z : catalog_.size) total += z;
    if (total <= capacity_) return cache_every_miss();
    return best(0, CacheState(capacity_, k_));
  }

  std::size_t states_explored() const { return memo_.size(); }

 private:
  std::size_t cache_every_miss() const {
    CacheState cache(capacity_, k_);
    std::size_t hits = 0;
    for (std::size_t j = 0; j < times_.size(); ++j) {
      if (cache.lookup(files_[j], times_[j])) ++hits;
      else cache.insert_with_eviction(files_[j], times_[j], catalog_);
    }
    return hits;
  }

  std::size_t best(std::size_t j, CacheState cache) {
    if (j == times_.size()) return 0;
    const double t = times_[j];
    const FileId f = files_[j];
    cache.purge_expired(t);
    std::string key = encode(j, cache);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (memo_.size() >= budget_) throw std::runtime_error("clairvoyant oracle: state budget exceeded");

    std::size_t value;
    if (cache.lookup(f, t)) {
      value = 1 + best(j + 1, cache);
    } else {
      value = best(j + 1, cache);
      if (catalog_.size[f] <= capacity_) {
        cache.insert_with_eviction(f, t, catalog_);
        value = std::max(value, best(j + 1, std::move(cache)));
      }
    }
    memo_.emplace(std::move(key), value);
    return value;
  }

  static std::string encode(std::size_t j, const CacheState& cache) {
    std::string key(sizeof j, '\0');
    std::memcpy(key.data(), &j, sizeof j);
    for (const auto& [f, e] : cache.entries()) {
      char buf[sizeof(FileId) + sizeof(double)];
      std::memcpy(buf, &f, sizeof f);
      std::memcpy(buf + sizeof f, &e.generation_time, sizeof(double));
      key.append(buf, sizeof buf);
    }
    return key;
  }

  FileCatalog catalog_;
  double capacity_;
  double k_;
  std::size_t budget_;
  std::vector<double> times_;
  std::vector<FileId> files_;
  std::unordered_map<std::string, std::size_t> memo_;
};

}  // namespace edgecache
