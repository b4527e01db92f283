// Command-line front end: run, sweep, compare-convergence, compare-mdp-smdp, export.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "edgecache/harness.hpp"

using namespace edgecache;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset = "default";
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;
  std::string policy;
  std::string output_dir;
  std::size_t workers = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "JSON config file; omitted keys take defaults");
  cmd->add_option("--preset", o.preset, "Base settings before the config file")
      ->check(CLI::IsMember({"default", "desk"}));
  cmd->add_option("-s,--set", o.overrides, "Override a config key, e.g. --set eta=0.5 (repeatable)");
  cmd->add_option("--seeds", o.seeds, "Seed list (overrides the config)");
  cmd->add_option("-p,--policy", o.policy, "ppo, uniform-ppo, lru, lfu, greedy-utility, always-cache, never-cache");
  cmd->add_option("-o,--out", o.output_dir, "Output directory (EDGECACHE_OUTPUT_DIR takes precedence)");
  cmd->add_option("-j,--workers", o.workers, "Worker threads (0: one per core)");
}

nlohmann::json parse_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;  // bare strings such as policy=lru
  }
}

ExperimentConfig resolve(const CommonOptions& o, const CLI::App* cmd) {
  ExperimentConfig c = o.preset == "desk" ? desk_preset() : ExperimentConfig{};
  if (!o.config_path.empty()) c = load_config(o.config_path, c);
  nlohmann::json patch = nlohmann::json::object();
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    patch[kv.substr(0, eq)] = parse_value(kv.substr(eq + 1));
  }
  c = apply_json(c, patch);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.policy.empty()) c.policy = o.policy;
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (cmd->count("--workers") > 0) c.workers = o.workers;
  validate(c);
  return c;
}

std::ofstream open_file(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  return os;
}

void write_config(const ExperimentConfig& c, const fs::path& dir) {
  auto os = open_file(dir / "config.json");
  auto j = to_json(c);
  j["fingerprint"] = fingerprint(c);
  os << j.dump(2) << '\n';
}

void print_reports(const std::vector<EvaluationReport>& reports) {
  write_results_csv(std::cout, reports);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge caching experiments with an SMDP actor-critic agent"};
  app.require_subcommand(1);

  CommonOptions run_o, sweep_o, conv_o, mode_o, export_o;

  auto* run = app.add_subcommand("run", "Train or instantiate a policy and evaluate it per seed");
  add_common(run, run_o);

  auto* sweep = app.add_subcommand("sweep", "Repeat run over values of one parameter");
  add_common(sweep, sweep_o);
  std::string axis;
  std::vector<double> values;
  sweep->add_option("--axis", axis, "eta, lambda or cache")->required()->check(CLI::IsMember({"eta", "lambda", "cache"}));
  sweep->add_option("--values", values, "Parameter values")->required();

  auto* conv = app.add_subcommand("compare-convergence", "Prioritized vs uniform replay training curves");
  add_common(conv, conv_o);

  auto* mode = app.add_subcommand("compare-mdp-smdp", "Per-request vs fixed-slot decision epochs");
  add_common(mode, mode_o);
  std::vector<double> lambdas{5.0, 1.66, 1.0};
  mode->add_option("--lambdas", lambdas, "Request rates to compare")->capture_default_str();

  auto* exp = app.add_subcommand("export", "Write the resolved config and the per-seed catalogs");
  add_common(exp, export_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto c = resolve(run_o, run);
      const auto reports = run_seeds(c);
      const fs::path dir = resolved_output_dir(c);
      export_results(reports, dir.string(), &c);
      print_reports(reports);
    } else if (*sweep) {
      auto c = resolve(sweep_o, sweep);
      const auto s = run_sweep(c, parse_axis(axis), values);
      const fs::path dir = resolved_output_dir(c);
      export_results(s.reports, dir.string(), &c);
      auto os = open_file(dir / ("sweep_" + axis_name(s.axis) + ".csv"));
      write_sweep_csv(os, s);
      write_sweep_csv(std::cout, s);
    } else if (*conv) {
      const auto c = resolve(conv_o, conv);
      const auto res = run_convergence_comparison(c);
      const fs::path dir = resolved_output_dir(c);
      write_config(c, dir);
      {
        auto os = open_file(dir / "convergence.csv");
        write_convergence_csv(os, res);
      }
      for (const auto& r : res.runs) {
        auto e = open_file(dir / "curves" / ("enhanced_seed" + std::to_string(r.seed) + ".csv"));
        write_curve_csv(e, r.enhanced_curve);
        auto u = open_file(dir / "curves" / ("uniform_seed" + std::to_string(r.seed) + ".csv"));
        write_curve_csv(u, r.uniform_curve);
      }
      write_convergence_csv(std::cout, res);
      std::cout << "enhanced faster in " << res.enhanced_faster << " of " << res.runs.size() << " seeds\n";
    } else if (*mode) {
      const auto c = resolve(mode_o, mode);
      const auto rows = run_mode_comparison(c, lambdas);
      const fs::path dir = resolved_output_dir(c);
      std::vector<EvaluationReport> all;
      for (const auto& r : rows) {
        all.insert(all.end(), r.smdp.begin(), r.smdp.end());
        all.insert(all.end(), r.slotted.begin(), r.slotted.end());
      }
      export_results(all, dir.string(), &c);
      auto os = open_file(dir / "mode_comparison.csv");
      write_mode_comparison_csv(os, rows);
      write_mode_comparison_csv(std::cout, rows);
    } else if (*exp) {
      const auto c = resolve(export_o, exp);
      const fs::path dir = resolved_output_dir(c);
      write_config(c, dir);
      for (auto seed : c.seeds) save_catalog((dir / ("catalog_seed" + std::to_string(seed) + ".csv")).string(),
                                             make_catalog(c, seed));
      std::cout << "wrote " << (dir / "config.json").string() << " (fingerprint " << fingerprint(c) << ")\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "edgecache: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
