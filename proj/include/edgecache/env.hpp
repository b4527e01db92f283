#pragma once

// Caching environment. In SMDP mode every request arrival is a decision
// epoch. In slotted mode requests queue until the next multiple of the slot
// length and only the head of the queue receives a caching decision.

#include <cmath>
#include <cstddef>
#include <deque>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "edgecache/cache.hpp"
#include "edgecache/workload.hpp"

namespace edgecache {

enum class Action : int { skip = 0, cache = 1 };

enum class DecisionMode { smdp, slotted };

struct StateVector {
  double mem_free = 1.0;
  std::vector<double> cached_flags;
  std::vector<double> utilities;
  std::vector<double> request_counts;
  std::vector<double> importances;
  std::vector<double> lifetimes;
  std::vector<double> sizes;
  std::vector<double> requested_one_hot;

  std::size_t file_count() const { return cached_flags.size(); }
  std::size_t flat_size() const { return 7 * file_count() + 1; }
};

// Divisors that bring raw features to roughly unit scale.
struct FeatureScale {
  double history = 100.0;
  double lifetime = 30.0;
  double size = 1000.0;
};

// Layout: [Mem, b, y, d/N, i, l/lmax, z/zmax, one-hot].
inline std::vector<double> flatten(const StateVector& s, const FeatureScale& scale) {
  std::vector<double> x;
  x.reserve(s.flat_size());
  x.push_back(s.mem_free);
  x.insert(x.end(), s.cached_flags.begin(), s.cached_flags.end());
  x.insert(x.end(), s.utilities.begin(), s.utilities.end());
  for (double d : s.request_counts) x.push_back(d / scale.history);
  x.insert(x.end(), s.importances.begin(), s.importances.end());
  for (double l : s.lifetimes) x.push_back(l / scale.lifetime);
  for (double z : s.sizes) x.push_back(z / scale.size);
  x.insert(x.end(), s.requested_one_hot.begin(), s.requested_one_hot.end());
  return x;
}

// r = w1 * sum_f b_f d_f y_f - w2 * Mem
inline double reward(const std::vector<double>& cached, const std::vector<double>& counts,
                     const std::vector<double>& utilities, double mem_free, double w1,
                     double w2) {
  if (cached.size() != counts.size() || cached.size() != utilities.size())
    throw std::invalid_argument("reward: vector lengths differ");
  double weighted = 0.0;
  for (std::size_t f = 0; f < cached.size(); ++f) weighted += cached[f] * counts[f] * utilities[f];
  return w1 * weighted - w2 * mem_free;
}

inline double reward(const StateVector& s, double w1, double w2) {
  return reward(s.cached_flags, s.request_counts, s.utilities, s.mem_free, w1, w2);
}

// Sliding window over the most recent N request ids.
class HistoryWindow {
 public:
  HistoryWindow(std::size_t window, std::size_t file_count)
      : window_(window), counts_(file_count, 0.0) {
    if (window == 0) throw std::invalid_argument("history window must be positive");
  }

  void push(FileId f) {
    recent_.push_back(f);
    counts_.at(f) += 1.0;
    if (recent_.size() > window_) {
      counts_[recent_.front()] -= 1.0;
      recent_.pop_front();
    }
  }

  std::size_t window() const { return window_; }
  std::size_t size() const { return recent_.size(); }
  const std::vector<double>& counts() const { return counts_; }

  void clear() {
    recent_.clear();
    std::fill(counts_.begin(), counts_.end(), 0.0);
  }

 private:
  std::size_t window_;
  std::deque<FileId> recent_;
  std::vector<double> counts_;
};

inline StateVector encode_state(const CacheState& cache, const HistoryWindow& history,
                                const FileCatalog& catalog, FileId requested, double t) {
  const auto n = catalog.count();
  if (requested >= n) throw std::out_of_range("encode_state: requested file out of range");
  StateVector s;
  s.mem_free = cache.mem_free();
  s.cached_flags.assign(n, 0.0);
  s.utilities.assign(n, 0.0);
  for (const auto& [f, e] : cache.entries()) {
    s.cached_flags[f] = 1.0;
    s.utilities[f] = cache.entry_utility(e, t);
  }
  s.request_counts = history.counts();
  s.importances = catalog.importance;
  s.lifetimes = catalog.lifetime;
  s.sizes = catalog.size;
  s.requested_one_hot.assign(n, 0.0);
  s.requested_one_hot[requested] = 1.0;
  return s;
}

struct EnvConfig {
  double capacity = 10000.0;
  double utility_k = 1.0;
  std::size_t history = 100;
  double w1 = 1.0;
  double w2 = 1.0;
  DecisionMode mode = DecisionMode::smdp;
  double slot_length = 1.0;
};

struct ServedRequest {
  FileId file;
  double arrival;
  bool hit;
  double utility;
};

struct StepOutcome {
  StateVector next_state;
  double reward = 0.0;
  // Discount exponent: the sojourn in SMDP mode, the slot length in slotted mode.
  double tau = 0.0;
  // Wall-clock time between this decision epoch and the next.
  double elapsed = 0.0;
  double time = 0.0;
  FileId file = 0;
  Action action = Action::skip;
  bool hit = false;
  double served_utility = 0.0;
  std::vector<ServedRequest> served;
  std::vector<FileId> evicted;
};

struct CorruptedState : std::logic_error {
  using std::logic_error::logic_error;
};

class Environment {
 public:
  Environment(FileCatalog catalog, EnvConfig config, std::unique_ptr<RequestSource> source)
      : catalog_(std::move(catalog)),
        config_(config),
        source_(std::move(source)),
        cache_(config.capacity, config.utility_k),
        history_(config.history, catalog_.count()) {
    validate_catalog(catalog_);
    if (!source_) throw std::invalid_argument("environment needs a request source");
    if (config_.mode == DecisionMode::slotted && !(config_.slot_length > 0.0))
      throw std::invalid_argument("slot length must be positive");
    scale_ = {static_cast<double>(config_.history), catalog_.ranges.lifetime.high,
              catalog_.ranges.size.high};
    reset();
  }

  const FileCatalog& catalog() const { return catalog_; }
  const EnvConfig& config() const { return config_; }
  const CacheState& cache() const { return cache_; }
  const HistoryWindow& history() const { return history_; }
  const FeatureScale& scale() const { return scale_; }

  double now() const { return now_; }
  FileId pending_file() const { return head().file; }
  bool pending_hit() const { return head().hit; }
  const StateVector& observation() const { return observation_; }
  std::vector<double> flat_observation() const { return flatten(observation_, scale_); }
  std::size_t requests_generated() const { return generated_; }

  StepOutcome act(Action a, const EvictionRank& rank = {}) {
    return config_.mode == DecisionMode::smdp ? step(a, rank) : step_slotted(a, rank);
  }

  StepOutcome step(Action a, const EvictionRank& rank = {}) {
    if (config_.mode != DecisionMode::smdp) throw std::logic_error("step() requires SMDP mode");
    StepOutcome out = begin_outcome(a);
    apply_decision(out, head().arrival, rank);
    history_.push(head().file);

    const Request r = draw();
    now_ += r.interarrival;
    queue_.clear();
    queue_.push_back(serve(r.file, now_));
    observation_ = encode_state(cache_, history_, catalog_, head().file, now_);

    out.tau = r.interarrival;
    out.elapsed = r.interarrival;
    return finish_outcome(std::move(out));
  }

  StepOutcome step_slotted(Action a, const EvictionRank& rank = {}) {
    if (config_.mode != DecisionMode::slotted)
      throw std::logic_error("step_slotted() requires slotted mode");
    StepOutcome out = begin_outcome(a);
    apply_decision(out, head().arrival, rank);
    for (const auto& q : queue_) history_.push(q.file);

    const double before = now_;
    open_slot();
    out.tau = config_.slot_length;
    out.elapsed = now_ - before;
    return finish_outcome(std::move(out));
  }

  // Restores an empty cache and history; the request source continues.
  void reset() {
    cache_.clear();
    history_.clear();
    queue_.clear();
    now_ = 0.0;
    if (config_.mode == DecisionMode::smdp) {
      const Request r = draw();
      now_ = r.interarrival;
      queue_.push_back(serve(r.file, now_));
      observation_ = encode_state(cache_, history_, catalog_, head().file, now_);
    } else {
      const Request r = draw();
      upcoming_ = {r.file, r.interarrival};
      open_slot();
    }
  }

  // Consistency checks used by tests; throws CorruptedState on violation.
  void check_invariants() const {
    double used = 0.0;
    for (const auto& [f, e] : cache_.entries()) {
      if (e.generation_time > now_) throw CorruptedState("entry generated in the future");
      used += e.size;
    }
    if (used > cache_.capacity() * (1.0 + 1e-12)) throw CorruptedState("capacity exceeded");
    double total = 0.0;
    for (double d : observation_.request_counts) total += d;
    if (total > static_cast<double>(history_.window())) throw CorruptedState("history overflow");
    for (std::size_t f = 0; f < observation_.file_count(); ++f)
      if (observation_.cached_flags[f] == 0.0 && observation_.utilities[f] != 0.0)
        throw CorruptedState("utility reported for an uncached file");
  }

 private:
  struct Upcoming {
    FileId file;
    double arrival;
  };

  const ServedRequest& head() const { return queue_.front(); }

  Request draw() {
    ++generated_;
    return source_->next();
  }

  ServedRequest serve(FileId f, double t) {
    ServedRequest s{f, t, false, 0.0};
    if (cache_.lookup(f, t)) {
      s.hit = true;
      s.utility = cache_.entry_utility(cache_.entries().at(f), t);
    }
    return s;
  }

  StepOutcome begin_outcome(Action a) const {
    StepOutcome out;
    out.time = now_;
    out.file = head().file;
    out.hit = head().hit;
    out.served_utility = head().utility;
    out.action = head().hit ? Action::skip : a;
    out.served = queue_;
    return out;
  }

  void apply_decision(StepOutcome& out, double generated_at, const EvictionRank& rank) {
    if (out.hit || out.action != Action::cache) return;
    const FileId f = out.file;
    if (catalog_.size[f] > cache_.capacity() ||
        (now_ - generated_at) >= catalog_.lifetime[f]) {
      out.action = Action::skip;
      return;
    }
    out.evicted = cache_.insert_with_eviction(f, now_, catalog_, generated_at, rank);
  }

  StepOutcome finish_outcome(StepOutcome out) {
    out.next_state = observation_;
    out.reward = reward(observation_, config_.w1, config_.w2);
    return out;
  }

  // Advances to the first slot boundary holding at least one arrival, serving
  // every arrival of that slot at its own arrival time.
  void open_slot() {
    const double slot = config_.slot_length;
    double k = std::ceil(upcoming_.arrival / slot);
    if (k * slot < upcoming_.arrival) k += 1.0;
    const double boundary = k * slot;
    queue_.clear();
    queue_.push_back(serve(upcoming_.file, upcoming_.arrival));
    for (;;) {
      const Request r = draw();
      const double t = upcoming_.arrival + r.interarrival;
      upcoming_ = {r.file, t};
      if (t > boundary) break;
      queue_.push_back(serve(r.file, t));
    }
    now_ = boundary;
    observation_ = encode_state(cache_, history_, catalog_, head().file, now_);
  }

  FileCatalog catalog_;
  EnvConfig config_;
  std::unique_ptr<RequestSource> source_;
  CacheState cache_;
  HistoryWindow history_;
  FeatureScale scale_;
  double now_ = 0.0;
  std::vector<ServedRequest> queue_;
  Upcoming upcoming_{0, 0.0};
  StateVector observation_;
  std::size_t generated_ = 0;
};

// One CSV row per decision epoch: time,file,action,hit,reward,tau (1-based file).
class TrajectoryLog {
 public:
  explicit TrajectoryLog(std::ostream& os) : os_(os) {
    os_ << "time,file,action,hit,reward,tau\n";
    os_.precision(17);
  }

  void record(const StepOutcome& o) {
    os_ << o.time << ',' << o.file + 1 << ',' << static_cast<int>(o.action) << ','
        << (o.hit ? 1 : 0) << ',' << o.reward << ',' << o.tau << '\n';
  }

 private:
  std::ostream& os_;
};

}  // namespace edgecache
