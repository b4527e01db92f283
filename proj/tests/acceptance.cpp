// Acceptance checks. Usage: acceptance [criterion ...]; no arguments runs all.
// Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "edgecache/harness.hpp"

using namespace edgecache;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

using ld = long double;

bool close_rel(double got, ld want, ld rel = 1e-9L, ld floor = 1e-300L) {
  const ld err = std::fabs(static_cast<ld>(got) - want);
  return err <= rel * std::max(std::fabs(want), floor);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// --- 1: math kernels ---------------------------------------------------------

Verdict math_kernels() {
  Rng rng(1001);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  const int trials = 10000;
  std::map<std::string, int> failures;

  for (int t = 0; t < trials; ++t) {
    // zipf
    const std::size_t F = 1 + static_cast<std::size_t>(u(0, 60));
    const double eta = u(0, 1);
    const auto p = zipf_probabilities(F, eta);
    ld sigma = 0;
    for (std::size_t f = 1; f <= F; ++f) sigma += 1.0L / std::pow(static_cast<ld>(f), static_cast<ld>(eta));
    for (std::size_t f = 1; f <= F; ++f)
      if (!close_rel(p[f - 1], 1.0L / (sigma * std::pow(static_cast<ld>(f), static_cast<ld>(eta)))))
        ++failures["zipf_probabilities"];

    // freshness and utility
    const double gen = u(0, 100), life = u(10, 30), now = gen + u(0, 40);
    const CacheEntry e{0, gen, 500.0, life, 0.5};
    const ld h = (static_cast<ld>(now) - gen) / life;
    if (!close_rel(freshness(now, e), h)) ++failures["freshness"];
    const double hh = freshness(now, e), imp = u(0.1, 0.9), k = u(0.1, 5);
    const ld y = hh >= 1.0 ? 0.0L
                           : imp * (std::exp(static_cast<ld>(k) * (1.0L - hh)) - 1.0L) /
                                 (std::exp(static_cast<ld>(k)) - 1.0L);
    if (!close_rel(utility(hh, imp, k), y)) ++failures["utility"];

    // mem_free after random inserts
    FileCatalog cat;
    const std::size_t n = 1 + t % 8;
    for (std::size_t f = 0; f < n; ++f) {
      cat.size.push_back(u(100, 1000));
      cat.lifetime.push_back(u(10, 30));
      cat.importance.push_back(u(0.1, 0.9));
    }
    cat.request_probs = zipf_probabilities(n, 0.5);
    CacheState cache(u(1000, 5000));
    for (std::size_t f = 0; f < n; ++f)
      if (cat.size[f] <= cache.capacity() && uniform01(rng) < 0.7) cache.insert_with_eviction(f, 0.0, cat);
    ld used = 0;
    for (const auto& [id, en] : cache.entries()) used += en.size;
    if (!close_rel(cache.mem_free(), (static_cast<ld>(cache.capacity()) - used) / cache.capacity(), 1e-9L, 1e-12L))
      ++failures["mem_free"];

    // reward
    std::vector<double> b(n), d(n), yv(n);
    ld inner = 0;
    for (std::size_t f = 0; f < n; ++f) {
      b[f] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
      d[f] = std::floor(u(0, 100));
      yv[f] = b[f] * u(0, 0.9);
      inner += static_cast<ld>(b[f]) * d[f] * yv[f];
    }
    const double mem = u(0, 1), w1 = u(0, 2), w2 = u(0, 2);
    if (!close_rel(reward(b, d, yv, mem, w1, w2), w1 * inner - static_cast<ld>(w2) * mem, 1e-9L, 1e-12L))
      ++failures["reward"];

    // advantage and returns
    const double r = u(-5, 30), tau = u(0.01, 10), v = u(-100, 100), vn = u(-100, 100), g = u(0.5, 1);
    const ld gt = std::pow(static_cast<ld>(g), static_cast<ld>(tau));
    if (!close_rel(advantage(r, tau, v, vn, g), r + gt * vn - v, 1e-9L, 1e-9L)) ++failures["advantage"];
    if (!close_rel(one_step_return(r, tau, vn, g), r + gt * vn, 1e-9L, 1e-9L)) ++failures["one_step_return"];
    const std::size_t m = 1 + t % 6;
    std::vector<double> rs(m), ts(m);
    ld total = 0, elapsed = 0;
    for (std::size_t j = 0; j < m; ++j) {
      rs[j] = u(-5, 30);
      ts[j] = u(0.01, 5);
      elapsed += ts[j];
      total += std::pow(static_cast<ld>(g), elapsed) * rs[j];
    }
    total += std::pow(static_cast<ld>(g), elapsed) * vn;
    if (!close_rel(n_step_return(rs, ts, vn, g), total, 1e-9L, 1e-9L)) ++failures["n_step_return"];

    // clipped surrogate
    const double lp_new = u(-5, 0), lp_old = u(-5, 0), adv = u(-3, 3), eps = u(0.05, 0.5);
    const ld rho = std::exp(static_cast<ld>(lp_new) - lp_old);
    const ld clipped = std::min(std::max(rho, 1.0L - eps), 1.0L + eps);
    if (!close_rel(clipped_surrogate(lp_new, lp_old, adv, eps), std::min(rho * adv, clipped * adv), 1e-9L, 1e-12L))
      ++failures["clipped_surrogate"];

    // sampling probabilities and importance weights
    const std::size_t q = 1 + t % 12;
    std::vector<double> prio(q);
    for (auto& x : prio) x = u(1e-4, 1);
    const double alpha = u(0, 1.5), beta = u(0, 1);
    const auto P = sampling_probabilities(prio, alpha);
    ld z = 0;
    for (double x : prio) z += std::pow(static_cast<ld>(x), static_cast<ld>(alpha));
    std::vector<ld> Pw(q);
    for (std::size_t i = 0; i < q; ++i) {
      Pw[i] = std::pow(static_cast<ld>(prio[i]), static_cast<ld>(alpha)) / z;
      if (!close_rel(P[i], Pw[i])) ++failures["sampling_probabilities"];
    }
    const auto w = importance_weights(P, q, beta);
    std::vector<ld> raw(q);
    for (std::size_t i = 0; i < q; ++i) raw[i] = std::pow(1.0L / (static_cast<ld>(q) * Pw[i]), static_cast<ld>(beta));
    const ld wmax = *std::max_element(raw.begin(), raw.end());
    for (std::size_t i = 0; i < q; ++i)
      if (!close_rel(w[i], raw[i] / wmax)) ++failures["importance_weights"];
  }

  std::string detail = std::to_string(trials) + " random inputs per kernel, relative 1e-9";
  for (const auto& [name, count] : failures) detail += "; " + name + " mismatches " + std::to_string(count);
  return {failures.empty(), detail};
}

// --- 2: gradients ------------------------------------------------------------

Verdict gradient_check() {
  Rng rng(2002);
  double worst = 0.0;
  int configs = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t in = 2 + trial % 6, h1 = 2 + (trial * 3) % 7, h2 = 2 + (trial * 5) % 5;
    for (std::size_t out : {std::size_t{2}, std::size_t{1}}) {
      Mlp net({in, h1, h2, out});
      for (auto& x : net.params()) x = 1.6 * uniform01(rng) - 0.8;
      std::vector<double> x(in);
      for (auto& v : x) v = 3.0 * uniform01(rng) - 1.5;
      const std::size_t a = trial % 2;
      // Actor: log pi(a | x). Critic: V(x).
      auto loss = [&](const Mlp& n) {
        const auto y = n.forward(x);
        return out == 2 ? log_softmax(y)[a] : y[0];
      };
      std::vector<double> up(out, 1.0);
      if (out == 2) {
        const auto pi = softmax(net.forward(x));
        for (std::size_t k = 0; k < 2; ++k) up[k] = (k == a ? 1.0 : 0.0) - pi[k];
      }
      const auto g = gradients(net, x, up);
      for (std::size_t i = 0; i < net.param_count(); ++i) {
        Mlp plus = net, minus = net;
        plus.params()[i] += 1e-5;
        minus.params()[i] -= 1e-5;
        const double fd = (loss(plus) - loss(minus)) / 2e-5;
        const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - g[i]) / denom);
      }
      ++configs;
    }
  }
  return {worst < 1e-4 && configs >= 20,
          std::to_string(configs) + " configurations (actor and critic), max relative error " + fmt(worst)};
}

// --- 3: replay statistics ----------------------------------------------------

Verdict replay_statistics() {
  Rng rng(3003);
  auto make_buffer = [&](std::size_t n, std::size_t dim) {
    ReplayBuffer buf(n);
    for (std::size_t i = 0; i < n; ++i) {
      Transition t;
      t.state.resize(dim);
      for (auto& x : t.state) x = uniform01(rng);
      t.next_state = t.state;
      t.epoch = i;
      buf.push(std::move(t));
    }
    return buf;
  };
  auto linf = [&](const ReplayBuffer& buf, const std::vector<double>& q, const ReplaySampling& cfg,
                  const std::vector<double>& target) {
    const std::size_t draws = 100000, per = buf.size() / 2;
    std::vector<double> freq(buf.size(), 0.0);
    std::size_t seen = 0;
    while (seen < draws) {
      const auto batch = sample_batch(buf, q, std::min(per, draws - seen), 1, cfg, rng);
      for (auto i : batch.starts) freq[i] += 1.0;
      seen += batch.starts.size();
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < freq.size(); ++i) worst = std::max(worst, std::abs(freq[i] / draws - target[i]));
    return worst;
  };

  const auto ub = make_buffer(100, 6);
  const std::vector<double> q1(6, 0.7);
  const double a = linf(ub, q1, {0.0, 0.6}, std::vector<double>(100, 0.01));

  // Crafted buffer: one state aligned with the query, others at varied angles.
  ReplayBuffer cb(40);
  for (std::size_t i = 0; i < 40; ++i) {
    Transition t;
    t.state = {std::cos(0.08 * i) * 2.0, std::sin(0.08 * i) * 2.0, 0.1 * (i % 5)};
    t.next_state = t.state;
    t.epoch = i;
    cb.push(std::move(t));
  }
  const std::vector<double> q2{1.5, 0.2, 0.4};
  const ReplaySampling crafted{0.7, 0.6};
  const auto P = buffer_sampling_probabilities(cb, q2, crafted);
  const double b = linf(cb, q2, crafted, P);

  bool c = true, d = true;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 50;
    std::vector<double> prio(n);
    for (auto& x : prio) x = uniform01(rng) + 1e-6;
    const auto probs = sampling_probabilities(prio, 0.4 + uniform01(rng));
    for (double w : importance_weights(probs, n, 0.0)) c = c && w == 1.0;
    for (double w : importance_weights_raw(probs, n, 0.0)) c = c && w == 1.0;
    const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
    for (double w : importance_weights(uniform, n, 1.0)) d = d && w == 1.0;
    const auto up = sampling_probabilities(std::vector<double>(n, 0.3), 0.4);
    for (double w : importance_weights(up, n, 1.0)) d = d && w == 1.0;
  }
  const bool pass = a < 0.01 && b < 0.01 && c && d;
  return {pass, "(a) alpha=0 Linf " + fmt(a) + "; (b) crafted Linf " + fmt(b) + "; (c) beta=0 unit weights " +
                    (c ? "yes" : "no") + "; (d) uniform P beta=1 unit weights " + (d ? "yes" : "no")};
}

// --- 4: eviction oracle ------------------------------------------------------

Verdict eviction_oracle() {
  Rng rng(4004);
  const double imps[] = {0.2, 0.4, 0.6};
  int mismatches = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 8);
    FileCatalog cat;
    for (std::size_t f = 0; f <= n; ++f) {
      cat.size.push_back(100.0 * (1 + static_cast<int>(uniform01(rng) * 5)));
      cat.lifetime.push_back(uniform01(rng) < 0.5 ? 10.0 : 20.0);
      cat.importance.push_back(imps[static_cast<int>(uniform01(rng) * 3)]);
    }
    cat.request_probs = zipf_probabilities(n + 1, 0.5);
    CacheState cache(2500.0);
    for (std::size_t f = 0; f < n; ++f) {
      const double gen = std::floor(uniform01(rng) * 4) * 5.0;  // repeated times create ties
      if (cache.used() + cat.size[f] <= cache.capacity())
        cache.insert_with_eviction(f, 20.0, cat, gen);
    }
    const double now = 20.0 + std::floor(uniform01(rng) * 3) * 2.0;
    const FileId incoming = n;

    // Exhaustive: among all eviction sets closed under the eviction order and
    // containing every expired entry, the smallest that makes room.
    std::vector<CacheEntry> es;
    for (const auto& [f, e] : cache.entries()) es.push_back(e);
    auto before = [&](const CacheEntry& x, const CacheEntry& y) {
      const bool xl = freshness(now, x) < 1.0, yl = freshness(now, y) < 1.0;
      if (xl != yl) return !xl;
      const double ux = xl ? utility(freshness(now, x), x.importance) : 0.0;
      const double uy = yl ? utility(freshness(now, y), y.importance) : 0.0;
      if (ux != uy) return ux < uy;
      if (x.size != y.size) return x.size > y.size;
      return x.file < y.file;
    };
    std::vector<FileId> best;
    bool found = false;
    for (unsigned mask = 0; mask < (1u << es.size()); ++mask) {
      bool ok = true;
      double freed = 0.0;
      for (std::size_t i = 0; i < es.size() && ok; ++i) {
        const bool in = mask >> i & 1u;
        if (!in && freshness(now, es[i]) >= 1.0) ok = false;
        if (in) {
          freed += es[i].size;
          for (std::size_t j = 0; j < es.size(); ++j)
            if (before(es[j], es[i]) && !(mask >> j & 1u)) ok = false;
        }
      }
      if (!ok || cache.capacity() - cache.used() + freed < cat.size[incoming]) continue;
      if (!found || static_cast<std::size_t>(std::popcount(mask)) < best.size()) {
        best.clear();
        for (std::size_t i = 0; i < es.size(); ++i)
          if (mask >> i & 1u) best.push_back(es[i].file);
        found = true;
      }
    }
    auto trial = cache;
    auto got = trial.insert_with_eviction(incoming, now, cat);
    std::sort(got.begin(), got.end());
    std::sort(best.begin(), best.end());
    if (!found || got != best) ++mismatches;
  }
  return {mismatches == 0, std::to_string(trials) + " random caches of up to 8 entries, mismatches " +
                               std::to_string(mismatches)};
}

// --- 5: per-request vs slotted decisions ------------------------------------

Verdict mode_ablation() {
  const auto rows = run_mode_comparison(desk_preset(), {1.0, 5.0});
  const double gap1 = rows[0].mean_smdp - rows[0].mean_slotted;
  const double gap5 = rows[1].mean_smdp - rows[1].mean_slotted;
  const bool pass = gap1 > 0.0 && gap5 > 0.0 && gap5 > gap1;
  return {pass, "lambda=1: smdp " + fmt(rows[0].mean_smdp) + " vs slotted " + fmt(rows[0].mean_slotted) +
                    "; lambda=5: smdp " + fmt(rows[1].mean_smdp) + " vs slotted " + fmt(rows[1].mean_slotted) +
                    " (5 seeds)"};
}

// --- 6: convergence ----------------------------------------------------------

Verdict convergence_ablation() {
  const auto res = run_convergence_comparison(desk_preset());
  std::string detail = "enhanced faster in " + std::to_string(res.enhanced_faster) + "/" +
                       std::to_string(res.runs.size()) + " seeds; steps (enhanced/uniform):";
  for (const auto& r : res.runs)
    detail += " " + std::to_string(r.enhanced.steps_to_threshold) + "/" + std::to_string(r.uniform.steps_to_threshold);
  return {res.enhanced_faster >= 4, detail};
}

// --- 7: sweep trends ---------------------------------------------------------

// Non-decreasing, allowing at most one drop no larger than the pooled sd.
bool trend_ok(const std::vector<double>& mean, const std::vector<double>& sd) {
  int drops = 0;
  for (std::size_t i = 1; i < mean.size(); ++i) {
    if (mean[i] >= mean[i - 1]) continue;
    const double pooled = std::sqrt((sd[i] * sd[i] + sd[i - 1] * sd[i - 1]) / 2.0);
    if (mean[i - 1] - mean[i] > pooled) return false;
    ++drops;
  }
  return drops <= 1;
}

Verdict sweep_trends() {
  const auto base = desk_preset();
  const double m = base.env.capacity;
  const std::vector<std::pair<SweepAxis, std::vector<double>>> sweeps{
      {SweepAxis::eta, {0.0, 0.5, 1.0}}, {SweepAxis::lambda, {1.0, 5.0}}, {SweepAxis::cache_size, {m / 2, m, 2 * m}}};
  bool pass = true;
  std::string detail;
  for (const auto& [axis, values] : sweeps) {
    const auto s = run_sweep(base, axis, values);
    std::vector<double> hm, hs, um, us;
    detail += (detail.empty() ? "" : "; ") + axis_name(axis) + " hits";
    for (const auto& p : s.points) {
      hm.push_back(p.mean_hits);
      hs.push_back(p.sd_hits);
      um.push_back(p.mean_utility);
      us.push_back(p.sd_utility);
      detail += " " + fmt(p.mean_hits);
    }
    detail += " utility";
    for (double x : um) detail += " " + fmt(x);
    const bool ok = trend_ok(hm, hs) && trend_ok(um, us);
    if (!ok) detail += " [violated]";
    pass = pass && ok;
  }
  return {pass, detail};
}

// --- 8: sanity bounds --------------------------------------------------------

Verdict sanity_bounds() {
  ExperimentConfig c;
  c.file_count = 10;
  c.request_rate = 1.0;
  c.env.capacity = 1500.0;
  c.training_steps = 5000;
  c.ppo.update_interval = 8;
  c.ppo.normalize_advantages = true;
  const std::size_t requests = 200;
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto catalog = make_catalog(c, seed);
    PoissonZipfSource src(catalog, c.request_rate, derive_seed(seed, SeedStream::evaluation));
    const auto trace = record_trace(src, requests + 1);
    ClairvoyantOracle oracle(catalog, c.env.capacity, c.env.utility_k, 20'000'000);
    const auto bound = oracle.max_hits({trace.begin(), trace.begin() + requests});
    std::size_t floor_hits = 0;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " oracle " +
              std::to_string(bound);
    for (std::string name : {"never-cache", "ppo", "uniform-ppo"}) {
      auto cc = c;
      cc.policy = name;
      auto trained = prepare_policy(cc, catalog, seed);
      Environment env(catalog, c.env, std::make_unique<TraceSource>(trace));
      const auto run = evaluate_policy(env, *trained.policy, requests);
      if (name == "never-cache") floor_hits = run.hit_count;
      if (run.hit_count < floor_hits || run.hit_count > bound) pass = false;
      detail += " " + name + " " + std::to_string(run.hit_count);
    }
  }
  return {pass, detail};
}

// --- 9: determinism ----------------------------------------------------------

std::map<std::string, std::string> read_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    out[std::filesystem::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Verdict determinism() {
  auto c = desk_preset();
  c.training_steps = 4000;
  c.seeds = {1, 2};
  c.write_trajectories = true;
  const auto tmp = std::filesystem::temp_directory_path() / "edgecache_acceptance_determinism";
  std::filesystem::remove_all(tmp);
  std::vector<std::map<std::string, std::string>> trees;
  for (int run = 0; run < 2; ++run) {
    std::vector<EvaluationReport> reports;
    for (std::string policy : {"ppo", "uniform-ppo", "lfu"}) {
      auto cc = c;
      cc.policy = policy;
      for (auto& r : run_seeds(cc)) reports.push_back(std::move(r));
    }
    const auto dir = tmp / std::to_string(run);
    export_results(reports, dir.string(), &c);
    trees.push_back(read_tree(dir));
  }
  std::filesystem::remove_all(tmp);
  const bool pass = trees[0] == trees[1] && trees[0].size() > 2;
  return {pass, std::to_string(trees[0].size()) + " exported files compared byte for byte"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"math kernels match direct evaluation", math_kernels},
      {"analytic gradients match finite differences", gradient_check},
      {"replay sampling statistics", replay_statistics},
      {"eviction matches exhaustive oracle", eviction_oracle},
      {"per-request decisions beat slotted decisions", mode_ablation},
      {"prioritized replay converges faster", convergence_ablation},
      {"sweep trends non-decreasing", sweep_trends},
      {"hit counts within never-cache and clairvoyant bounds", sanity_bounds},
      {"re-runs reproduce identical outputs", determinism},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(k));
  }
  if (selected.empty())
    for (std::size_t k = 1; k <= criteria.size(); ++k) selected.push_back(k);

  int failed = 0;
  for (auto k : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v{false, ""};
    try {
      v = criteria[k - 1].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << k << " " << (v.pass ? "PASS" : "FAIL") << ": " << criteria[k - 1].first << " | "
              << v.detail << " | " << fmt(secs) << "s" << std::endl;
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
