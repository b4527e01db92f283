#pragma once

// Capacity-bounded edge cache with freshness tracking and lowest-utility
// eviction. Capacity and sizes share one memory unit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "edgecache/workload.hpp"

namespace edgecache {

struct CacheEntry {
  FileId file;
  double generation_time;
  double size;
  double lifetime;
  double importance;
};

// Age of the copy over its lifetime; values >= 1 mean expired.
inline double freshness(double t, const CacheEntry& e) {
  if (t < e.generation_time) throw std::invalid_argument("freshness: time precedes generation");
  return (t - e.generation_time) / e.lifetime;
}

// y = i * (e^{k(1-h)} - 1) / (e^k - 1), zero once expired.
inline double utility(double h, double importance, double k = 1.0) {
  if (h < 0.0) throw std::invalid_argument("utility: negative freshness");
  if (!(k > 0.0)) throw std::invalid_argument("utility: shape k must be positive");
  if (h >= 1.0) return 0.0;
  return importance * std::expm1(k * (1.0 - h)) / std::expm1(k);
}

struct Uncacheable : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Ordering key for eviction among live entries; lower is evicted first.
using EvictionRank = std::function<double(const CacheEntry&, double now)>;

class CacheState {
 public:
  explicit CacheState(double capacity, double utility_k = 1.0)
      : capacity_(capacity), k_(utility_k) {
    if (!(capacity > 0.0)) throw std::invalid_argument("cache capacity must be positive");
    if (!(utility_k > 0.0)) throw std::invalid_argument("utility shape k must be positive");
  }

  double capacity() const { return capacity_; }
  double utility_k() const { return k_; }
  double used() const { return used_; }
  std::size_t entry_count() const { return entries_.size(); }
  const std::map<FileId, CacheEntry>& entries() const { return entries_; }

  bool contains(FileId f) const { return entries_.count(f) != 0; }

  double mem_free() const { return (capacity_ - used_) / capacity_; }

  double entry_utility(const CacheEntry& e, double t) const {
    return utility(freshness(t, e), e.importance, k_);
  }

  // Hit iff present and unexpired; an expired copy of f is dropped.
  bool lookup(FileId f, double t) {
    auto it = entries_.find(f);
    if (it == entries_.end()) return false;
    if (freshness(t, it->second) >= 1.0) {
      erase(it);
      return false;
    }
    return true;
  }

  // Inserts f stamped with generation_time, evicting expired copies first and
  // then live entries in ascending rank until f fits. Default rank is utility
  // at time t. Ties: larger size first, then lower file id.
  std::vector<FileId> insert_with_eviction(FileId f, double t, const FileCatalog& catalog,
                                           double generation_time,
                                           const EvictionRank& rank = {}) {
    const double sz = catalog.size.at(f);
    if (sz > capacity_) throw Uncacheable("file larger than cache capacity");
    if (generation_time > t) throw std::invalid_argument("generation time in the future");

    if (auto it = entries_.find(f); it != entries_.end()) erase(it);

    struct Candidate {
      bool live;
      double key;
      double size;
      FileId file;
    };
    std::vector<Candidate> order;
    order.reserve(entries_.size());
    for (const auto& [id, e] : entries_) {
      const bool live = freshness(t, e) < 1.0;
      const double key = !live ? 0.0 : rank ? rank(e, t) : entry_utility(e, t);
      order.push_back({live, key, e.size, id});
    }
    std::sort(order.begin(), order.end(), [](const Candidate& a, const Candidate& b) {
      if (a.live != b.live) return !a.live;
      if (a.key != b.key) return a.key < b.key;
      if (a.size != b.size) return a.size > b.size;
      return a.file < b.file;
    });

    std::vector<FileId> evicted;
    for (const auto& c : order) {
      if (c.live && capacity_ - used_ >= sz) break;
      erase(entries_.find(c.file));
      evicted.push_back(c.file);
    }
    entries_.emplace(f, CacheEntry{f, generation_time, sz, catalog.lifetime.at(f),
                                   catalog.importance.at(f)});
    used_ += sz;
    return evicted;
  }

  std::vector<FileId> insert_with_eviction(FileId f, double t, const FileCatalog& catalog) {
    return insert_with_eviction(f, t, catalog, t);
  }

  void remove(FileId f) {
    if (auto it = entries_.find(f); it != entries_.end()) erase(it);
  }

  // Drops every entry whose freshness at t is >= 1; returns the dropped ids.
  std::vector<FileId> purge_expired(double t) {
    std::vector<FileId> dropped;
    for (auto it = entries_.begin(); it != entries_.end();) {
      auto cur = it++;
      if (freshness(t, cur->second) >= 1.0) {
        dropped.push_back(cur->first);
        erase(cur);
      }
    }
    return dropped;
  }

  void clear() {
    entries_.clear();
    used_ = 0.0;
  }

  // Structured-text snapshot: "file,generation_time,size,lifetime" (1-based file).
  void write_snapshot(std::ostream& os) const {
    os << "capacity," << capacity_ << "\nfile,generation_time,size,lifetime\n";
    for (const auto& [id, e] : entries_)
      os << id + 1 << ',' << e.generation_time << ',' << e.size << ',' << e.lifetime << '\n';
  }

 private:
  void erase(std::map<FileId, CacheEntry>::iterator it) {
    used_ -= it->second.size;
    entries_.erase(it);
    if (entries_.empty()) used_ = 0.0;
  }

  double capacity_;
  double k_;
  double used_ = 0.0;
  std::map<FileId, CacheEntry> entries_;
};

}  // namespace edgecache
