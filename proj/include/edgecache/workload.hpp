#pragma once

// Synthetic catalog and request process: Zipf popularity over Poisson
// arrivals. File ids are 0-based in memory and 1-based in every text file.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgecache/random.hpp"

namespace edgecache {

using FileId = std::size_t;

struct Range {
  double low;
  double high;

  bool contains(double v) const { return v >= low && v <= high; }
};

struct AttributeRanges {
  Range lifetime{10.0, 30.0};
  Range size{100.0, 1000.0};
  Range importance{0.1, 0.9};
};

struct FileCatalog {
  std::vector<double> lifetime;
  std::vector<double> size;
  std::vector<double> importance;
  std::vector<double> request_probs;
  double zipf_eta = 0.0;
  AttributeRanges ranges;

  std::size_t count() const { return lifetime.size(); }
};

inline std::vector<double> zipf_probabilities(std::size_t file_count, double eta) {
  if (file_count == 0) throw std::invalid_argument("zipf_probabilities: F must be >= 1");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("zipf_probabilities: eta must lie in [0, 1]");
  std::vector<double> probs(file_count);
  double sigma = 0.0;
  for (std::size_t f = 0; f < file_count; ++f) {
    probs[f] = 1.0 / std::pow(static_cast<double>(f + 1), eta);
    sigma += probs[f];
  }
  for (auto& p : probs) p /= sigma;
  return probs;
}

inline void validate_range(const Range& r, const char* what) {
  if (!(r.low > 0.0) || !(r.high >= r.low) || !std::isfinite(r.high))
    throw std::invalid_argument(std::string("invalid ") + what + " range");
}

inline void validate_ranges(const AttributeRanges& ranges) {
  validate_range(ranges.lifetime, "lifetime");
  validate_range(ranges.size, "size");
  validate_range(ranges.importance, "importance");
  if (ranges.importance.high > 1.0)
    throw std::invalid_argument("importance range must lie within (0, 1]");
}

inline void validate_catalog(const FileCatalog& c) {
  const auto n = c.count();
  if (n == 0) throw std::invalid_argument("catalog is empty");
  if (c.size.size() != n || c.importance.size() != n || c.request_probs.size() != n)
    throw std::invalid_argument("catalog attribute vectors differ in length");
  for (std::size_t f = 0; f < n; ++f) {
    if (!(c.lifetime[f] > 0.0) || !(c.size[f] > 0.0))
      throw std::invalid_argument("catalog lifetimes and sizes must be positive");
    if (!(c.importance[f] >= 0.0 && c.importance[f] <= 1.0))
      throw std::invalid_argument("catalog importance must lie in [0, 1]");
  }
}

// Attributes are drawn uniformly from the configured ranges; the draw order
// (lifetime, size, importance per file) is part of the reproducibility contract.
inline FileCatalog generate_catalog(std::size_t file_count, double eta, std::uint64_t seed,
                                    const AttributeRanges& ranges = {}) {
  validate_ranges(ranges);
  FileCatalog c;
  c.zipf_eta = eta;
  c.ranges = ranges;
  c.request_probs = zipf_probabilities(file_count, eta);
  Rng rng{seed};
  auto draw = [&rng](const Range& r) {
    return r.low == r.high ? r.low : r.low + (r.high - r.low) * uniform01(rng);
  };
  for (std::size_t f = 0; f < file_count; ++f) {
    c.lifetime.push_back(draw(ranges.lifetime));
    c.size.push_back(draw(ranges.size));
    c.importance.push_back(draw(ranges.importance));
  }
  return c;
}

inline FileCatalog with_eta(FileCatalog c, double eta) {
  c.zipf_eta = eta;
  c.request_probs = zipf_probabilities(c.count(), eta);
  return c;
}

// Inverse-CDF draw over request_probs.
inline FileId sample_request(const FileCatalog& catalog, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t f = 0; f < catalog.request_probs.size(); ++f) {
    acc += catalog.request_probs[f];
    if (u < acc) return f;
  }
  return catalog.request_probs.size() - 1;
}

class RequestStream {
 public:
  RequestStream(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    if (!(rate > 0.0) || !std::isfinite(rate))
      throw std::invalid_argument("request rate must be positive");
  }

  double rate() const { return rate_; }
  double next_arrival_time() const { return next_arrival_; }
  Rng& rng() { return rng_; }

  double sample_interarrival() {
    double dt = 0.0;
    // exponential_distribution may return 0 for u == 0; support is (0, inf).
    while (!(dt > 0.0)) dt = std::exponential_distribution<double>{rate_}(rng_);
    next_arrival_ += dt;
    return dt;
  }

 private:
  double rate_;
  Rng rng_;
  double next_arrival_ = 0.0;
};

struct Request {
  double interarrival;
  FileId file;
};

// Source of (interarrival, file) pairs driving the environment.
class RequestSource {
 public:
  virtual ~RequestSource() = default;
  virtual Request next() = 0;
  virtual std::unique_ptr<RequestSource> clone() const = 0;
};

class PoissonZipfSource final : public RequestSource {
 public:
  PoissonZipfSource(FileCatalog catalog, double rate, std::uint64_t seed)
      : catalog_(std::move(catalog)), stream_(rate, seed) {}

  Request next() override {
    const double dt = stream_.sample_interarrival();
    return {dt, sample_request(catalog_, stream_.rng())};
  }

  std::unique_ptr<RequestSource> clone() const override {
    return std::make_unique<PoissonZipfSource>(*this);
  }

 private:
  FileCatalog catalog_;
  RequestStream stream_;
};

// Replays a fixed trace; throws once the trace is exhausted.
class TraceSource final : public RequestSource {
 public:
  explicit TraceSource(std::vector<Request> trace) : trace_(std::move(trace)) {}

  Request next() override {
    if (pos_ >= trace_.size()) throw std::out_of_range("request trace exhausted");
    return trace_[pos_++];
  }

  std::unique_ptr<RequestSource> clone() const override {
    return std::make_unique<TraceSource>(*this);
  }

 private:
  std::vector<Request> trace_;
  std::size_t pos_ = 0;
};

inline std::vector<Request> record_trace(RequestSource& source, std::size_t count) {
  std::vector<Request> trace;
  trace.reserve(count);
  for (std::size_t i = 0; i < count; ++i) trace.push_back(source.next());
  return trace;
}

// Catalog text format: CSV header "index,lifetime,size,importance", one row per
// file type, 1-based index. Popularity is not stored; it follows from eta.
inline void write_catalog(std::ostream& os, const FileCatalog& c) {
  os << "index,lifetime,size,importance\n";
  os.precision(17);
  for (std::size_t f = 0; f < c.count(); ++f)
    os << f + 1 << ',' << c.lifetime[f] << ',' << c.size[f] << ',' << c.importance[f] << '\n';
}

inline FileCatalog read_catalog(std::istream& is, double eta, const AttributeRanges& ranges = {}) {
  std::string line;
  if (!std::getline(is, line) || line != "index,lifetime,size,importance")
    throw std::runtime_error("catalog: missing or malformed header");
  FileCatalog c;
  c.zipf_eta = eta;
  c.ranges = ranges;
  std::size_t expected = 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell[4];
    for (auto& s : cell)
      if (!std::getline(row, s, ',')) throw std::runtime_error("catalog: short row '" + line + "'");
    if (std::stoul(cell[0]) != expected)
      throw std::runtime_error("catalog: rows must be numbered 1..F in order");
    ++expected;
    c.lifetime.push_back(std::stod(cell[1]));
    c.size.push_back(std::stod(cell[2]));
    c.importance.push_back(std::stod(cell[3]));
  }
  if (c.lifetime.empty()) throw std::runtime_error("catalog: no rows");
  c.request_probs = zipf_probabilities(c.count(), eta);
  validate_catalog(c);
  return c;
}

inline void save_catalog(const std::string& path, const FileCatalog& c) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_catalog(os, c);
}

inline FileCatalog load_catalog(const std::string& path, double eta,
                                const AttributeRanges& ranges = {}) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open catalog '" + path + "'");
  return read_catalog(is, eta, ranges);
}

}  // namespace edgecache
