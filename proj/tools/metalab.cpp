// Command-line front end for running, sweeping and aggregating experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "metalab/labcli/config.hpp"
#include "metalab/labcli/plotdata.hpp"
#include "metalab/labcli/runner.hpp"
#include "metalab/labcli/sweep.hpp"

namespace fs = std::filesystem;
using namespace metalab;
using namespace metalab::labcli;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds;
  std::string out;
  std::optional<std::uint64_t> log_stride;
  std::size_t workers = 1;
};

void add_common(CLI::App* sub, CommonFlags& f, bool needs_config = true) {
  auto* c = sub->add_option("--config", f.config, "JSON configuration file");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "run seed, or first seed of a multi-seed batch");
  sub->add_option("--seeds", f.seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--log-stride", f.log_stride, "log every n-th outer iteration")->check(CLI::PositiveNumber);
  sub->add_option("--workers", f.workers, "parallel runs")->check(CLI::PositiveNumber);
}

json load_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path + " is not valid JSON: " + e.what());
  }
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

int cmd_run(const CommonFlags& f, bool log_inner) {
  auto cfg = parse_config(read_text(f.config));
  const std::uint64_t first = f.seed.value_or(cfg.run.seed);
  const std::size_t n = f.seeds.value_or(1);
  const auto dir = ensure_dir(f.out.empty() ? cfg.run.out : f.out);
  RunOptions opt;
  opt.log_stride = f.log_stride.value_or(cfg.run.log_stride);
  opt.log_inner = log_inner || cfg.run.log_inner;
  std::vector<double> totals(n);
  auto status = parallel_for(n, f.workers, [&](std::size_t k) {
    const std::uint64_t seed = first + k;
    auto r = run_experiment(cfg, seed, opt);
    const std::string stem = "run_seed" + std::to_string(seed);
    write_text((dir / (stem + ".csv")).string(), r.csv);
    if (opt.log_inner) write_text((dir / (stem + "_inner.csv")).string(), r.inner_csv);
    totals[k] = r.total_return;
  });
  int rc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (status[k].ok()) {
      std::cout << "seed " << first + k << " total_return " << format_number(totals[k]) << "\n";
    } else {
      std::cerr << "seed " << first + k << " failed: " << status[k].error << "\n";
      rc = 1;
    }
  }
  return rc;
}

void write_sweep(const SweepResult& r, const fs::path& dir) {
  write_text((dir / "summary.csv").string(), sweep_summary_csv(r));
  if (r.best) {
    auto best = config_to_json(r.cells[*r.best].config);
    write_text((dir / "best_config.json").string(), best.dump(2) + "\n");
  }
}

int cmd_sweep(const CommonFlags& f) {
  const json j = load_json(f.config);
  const auto dir = ensure_dir(f.out.empty() ? "sweep" : f.out);
  const std::uint64_t stride = f.log_stride.value_or(1);
  auto apply_flags = [&](SweepSpec& s) {
    if (f.seeds) s.seeds = *f.seeds;
    if (f.seed) s.first_seed = *f.seed;
  };
  if (!j.contains("variants")) {
    auto spec = sweep_from_json(j);
    apply_flags(spec);
    const auto runs = ensure_dir((dir / "runs").string());
    auto r = run_sweep(spec, f.workers, runs.string(), stride);
    write_sweep(r, dir);
    for (const auto& c : r.cells)
      std::cout << c.key << " mean " << (c.failed ? "failed" : format_number(c.mean)) << "\n";
    if (!r.best) {
      std::cerr << "every sweep cell failed\n";
      return 1;
    }
    std::cout << "best " << r.cells[*r.best].key << "\n";
    return 0;
  }
  auto variants = variants_from_json(j);
  for (auto& v : variants) apply_flags(v.spec);
  audit_fairness(variants);
  std::string cmp = "variant,grid_size,best_config_key,n,mean,std\n";
  for (const auto& v : variants) {
    const auto vdir = ensure_dir((dir / v.name).string());
    const auto runs = ensure_dir((vdir / "runs").string());
    auto r = run_sweep(v.spec, f.workers, runs.string(), stride);
    write_sweep(r, vdir);
    if (r.best) {
      const auto& b = r.cells[*r.best];
      cmp += join_row({v.name, std::to_string(v.spec.cardinality()), csv_escape(b.key), std::to_string(b.totals.size()),
                       format_number(b.mean), format_number(b.std)});
    } else {
      cmp += join_row({v.name, std::to_string(v.spec.cardinality()), "", "0", "", ""});
    }
  }
  write_text((dir / "comparison.csv").string(), cmp);
  std::cout << cmp;
  return 0;
}

int cmd_freq(const CommonFlags& f) {
  auto spec = freq_sweep_from_json(load_json(f.config));
  if (f.seeds) spec.seeds = *f.seeds;
  if (f.seed) spec.first_seed = *f.seed;
  const auto dir = ensure_dir(f.out.empty() ? "freq" : f.out);
  auto rows = run_freq_sweep(spec, f.workers);
  const auto summary = freq_summary_csv(rows);
  write_text((dir / "freq_summary.csv").string(), summary);
  write_text((dir / "freq_seeds.csv").string(), freq_seeds_csv(rows, spec.first_seed));
  std::cout << summary;
  return 0;
}

int cmd_ablate(const CommonFlags& f) {
  auto spec = ablation_from_json(load_json(f.config));
  if (f.seeds) spec.seeds = *f.seeds;
  if (f.seed) spec.first_seed = *f.seed;
  const auto dir = ensure_dir(f.out.empty() ? "ablation" : f.out);
  auto arms = run_ablation(spec, f.workers);
  const auto summary = ablation_summary_csv(arms);
  write_text((dir / "ablation_summary.csv").string(), summary);
  write_text((dir / "ablation_seeds.csv").string(), ablation_seeds_csv(arms, spec.first_seed));
  std::cout << summary;
  return 0;
}

int cmd_probe(const CommonFlags& f) {
  auto cfg = parse_config(read_text(f.config));
  if (!has_probes(cfg)) throw UsageError("probes need a reward context in the config");
  const std::uint64_t first = f.seed.value_or(cfg.run.seed);
  const std::size_t n = f.seeds.value_or(1);
  const auto dir = ensure_dir(f.out.empty() ? cfg.run.out : f.out);
  RunOptions opt;
  opt.log_stride = f.log_stride.value_or(cfg.run.log_stride);
  std::vector<std::vector<double>> probes(n);
  auto status = parallel_for(n, f.workers, [&](std::size_t k) {
    auto r = run_experiment(cfg, first + k, opt);
    write_text((dir / ("run_seed" + std::to_string(first + k) + ".csv")).string(), r.csv);
    probes[k] = r.final_probes;
  });
  std::string out = "seed";
  for (auto p : context::kProbeNames) out += ",probe_" + std::string(p);
  out += "\n";
  int rc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!status[k].ok()) {
      std::cerr << "seed " << first + k << " failed: " << status[k].error << "\n";
      rc = 1;
      continue;
    }
    std::vector<std::string> row{std::to_string(first + k)};
    for (double v : probes[k]) row.push_back(format_number(v));
    out += join_row(row);
  }
  write_text((dir / "probes.csv").string(), out);
  std::cout << out;
  return rc;
}

int cmd_plotdata(const std::string& kind, const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<PlotGroup> groups;
  for (const auto& in : inputs) {
    const auto eq = in.find('=');
    PlotGroup g;
    g.label = eq == std::string::npos ? "all" : in.substr(0, eq);
    std::string files = eq == std::string::npos ? in : in.substr(eq + 1);
    std::size_t pos = 0;
    while (pos <= files.size()) {
      const auto comma = files.find(',', pos);
      const std::string path = files.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!path.empty()) g.seeds.push_back(parse_metrics_csv(read_text(path), path));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (eq == std::string::npos && !groups.empty() && groups.back().label == "all") {
      for (auto& t : g.seeds) groups.back().seeds.push_back(std::move(t));
    } else {
      groups.push_back(std::move(g));
    }
  }
  const auto text = emit_plotdata(groups, parse_plot_kind(kind));
  if (out.empty()) std::cout << text;
  else write_text(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-gradient experiment runner"};
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, freq_f, ablate_f, probe_f;
  bool log_inner = false;
  auto* run = app.add_subcommand("run", "run one configuration for one or more seeds");
  add_common(run, run_f);
  run->add_flag("--log-inner", log_inner, "also log meta-parameters at every inner update");
  auto* sweep = app.add_subcommand("sweep", "grid sweep with best-configuration selection");
  add_common(sweep, sweep_f);
  auto* freq = app.add_subcommand("freq-sweep", "method against baseline across task-switch periods");
  add_common(freq, freq_f);
  auto* ablate = app.add_subcommand("ablate-context", "context richness ablation");
  add_common(ablate, ablate_f);
  auto* probe = app.add_subcommand("probe", "train, then report meta-network outputs on probe inputs");
  add_common(probe, probe_f);

  std::string kind, plot_out;
  std::vector<std::string> inputs;
  auto* plot = app.add_subcommand("plotdata", "aggregate metrics files into plot-ready CSV");
  plot->add_option("--kind", kind, "schedule, probes or freq")->required();
  plot->add_option("--out", plot_out, "output CSV (stdout when omitted)");
  plot->add_option("inputs", inputs, "[label=]file[,file...] per group")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_f, log_inner);
    if (*sweep) return cmd_sweep(sweep_f);
    if (*freq) return cmd_freq(freq_f);
    if (*ablate) return cmd_ablate(ablate_f);
    if (*probe) return cmd_probe(probe_f);
    if (*plot) return cmd_plotdata(kind, inputs, plot_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
