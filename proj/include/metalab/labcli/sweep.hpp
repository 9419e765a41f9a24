#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metalab/labcli/config.hpp"
#include "metalab/labcli/pool.hpp"
#include "metalab/labcli/runner.hpp"
#include "metalab/labcli/stats.hpp"

namespace metalab::labcli {

// ---------------------------------------------------------------------------
// Batches of independent runs

struct RunJob {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::string csv_path;  // written when non-empty
};

struct RunOutcome {
  std::optional<double> total;
  std::string error;
};

inline std::vector<RunOutcome> run_batch(const std::vector<RunJob>& jobs, std::size_t workers,
                                         std::uint64_t log_stride = 1) {
  std::vector<RunOutcome> out(jobs.size());
  auto status = parallel_for(jobs.size(), workers, [&](std::size_t i) {
    RunOptions opt;
    opt.log_stride = log_stride;
    auto r = run_experiment(jobs[i].config, jobs[i].seed, opt);
    if (!jobs[i].csv_path.empty()) write_text(jobs[i].csv_path, r.csv);
    out[i].total = r.total_return;
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) out[i].error = status[i].error;
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// ---------------------------------------------------------------------------
// Hyperparameter sweeps

struct SweepSpec {
  json base;  // canonical experiment config
  std::vector<std::pair<std::string, std::vector<json>>> grid;  // dotted path -> candidate values
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;

  std::size_t cardinality() const {
    std::size_t n = 1;
    for (const auto& [path, values] : grid) n *= values.size();
    return n;
  }
};

inline json& json_at_path(json& j, const std::string& path) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw UsageError("sweep grid path '" + path + "' is not a config field");
    cur = &(*cur)[key];
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

inline SweepSpec sweep_from_json(const json& j) {
  SweepSpec s;
  detail::Section top(j, "sweep");
  const json* base = top.sub("base");
  if (!base) throw UsageError("sweep needs a 'base' config");
  s.base = config_to_json(config_from_json(*base));
  if (const json* g = top.sub("grid")) {
    if (!g->is_object()) throw UsageError("sweep 'grid' must map config paths to value lists");
    for (auto it = g->begin(); it != g->end(); ++it) {
      if (!it.value().is_array() || it.value().empty())
        throw UsageError("sweep grid entry '" + it.key() + "' must be a non-empty list");
      json probe = s.base;
      json_at_path(probe, it.key());
      s.grid.emplace_back(it.key(), std::vector<json>(it.value().begin(), it.value().end()));
    }
  }
  top.get("seeds", s.seeds);
  top.get("first_seed", s.first_seed);
  if (s.seeds == 0) throw UsageError("sweep needs at least one seed");
  return s;
}

struct SweepCell {
  std::size_t index = 0;
  std::string key;  // compact JSON of the grid assignment
  ExperimentConfig config;
  std::vector<double> totals;  // one per seed
  double mean = 0;
  double std = 0;
  bool failed = false;
  std::string error;
};

/// Cartesian product in grid order, last entry varying fastest. Every cell is
/// validated before anything runs.
inline std::vector<SweepCell> expand_grid(const SweepSpec& s) {
  std::vector<SweepCell> cells;
  const std::size_t n = s.cardinality();
  for (std::size_t i = 0; i < n; ++i) {
    json cfg = s.base;
    json assign = json::object();
    std::size_t rem = i;
    std::vector<std::pair<std::string, json>> picks(s.grid.size());
    for (std::size_t k = s.grid.size(); k-- > 0;) {
      const auto& [path, values] = s.grid[k];
      picks[k] = {path, values[rem % values.size()]};
      rem /= values.size();
    }
    for (const auto& [path, v] : picks) {
      json_at_path(cfg, path) = v;
      assign[path] = v;
    }
    SweepCell cell;
    cell.index = i;
    cell.key = assign.dump();
    cell.config = config_from_json(cfg);
    try {
      validate(cell.config);
    } catch (const UsageError& e) {
      throw UsageError("sweep cell " + cell.key + ": " + e.what());
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

/// Highest mean among cells that did not fail; ties go to the lower meta_lr,
/// then to the lexicographically smaller key.
inline std::optional<std::size_t> select_best(const std::vector<SweepCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (c.failed) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = cells[*best];
    if (c.mean != b.mean) {
      if (c.mean > b.mean) best = i;
      continue;
    }
    if (c.config.meta.meta_lr != b.config.meta.meta_lr) {
      if (c.config.meta.meta_lr < b.config.meta.meta_lr) best = i;
      continue;
    }
    if (c.key < b.key) best = i;
  }
  return best;
}

struct SweepResult {
  std::vector<SweepCell> cells;
  std::optional<std::size_t> best;
};

/// Runs every (cell, seed). A cell with any failed run is excluded from selection.
inline SweepResult run_sweep(const SweepSpec& s, std::size_t workers, const std::string& runs_dir = {},
                             std::uint64_t log_stride = 1) {
  SweepResult r;
  r.cells = expand_grid(s);
  std::vector<RunJob> jobs;
  for (const auto& c : r.cells)
    for (std::size_t k = 0; k < s.seeds; ++k) {
      RunJob job{c.config, s.first_seed + k, {}};
      if (!runs_dir.empty())
        job.csv_path = (std::filesystem::path(runs_dir) /
                        ("cell" + std::to_string(c.index) + "_seed" + std::to_string(job.seed) + ".csv"))
                           .string();
      jobs.push_back(std::move(job));
    }
  const auto outcomes = run_batch(jobs, workers, log_stride);
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    auto& c = r.cells[i];
    for (std::size_t k = 0; k < s.seeds; ++k) {
      const auto& o = outcomes[i * s.seeds + k];
      if (!o.error.empty()) {
        c.failed = true;
        if (c.error.empty()) c.error = "seed " + std::to_string(s.first_seed + k) + ": " + o.error;
      } else {
        c.totals.push_back(*o.total);
      }
    }
    if (!c.failed) {
      c.mean = mean_of(c.totals);
      c.std = std_of(c.totals);
    }
  }
  r.best = select_best(r.cells);
  return r;
}

inline std::string sweep_summary_csv(const SweepResult& r) {
  std::string out = "cell,config_key,n,mean,std,best,failed,error\n";
  for (const auto& c : r.cells) {
    out += join_row({std::to_string(c.index), csv_escape(c.key), std::to_string(c.totals.size()),
                     c.failed ? "" : format_number(c.mean), c.failed ? "" : format_number(c.std),
                     r.best && *r.best == c.index ? "1" : "0", c.failed ? "1" : "0", csv_escape(c.error)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparisons between meta-gradient variants

struct Variant {
  std::string name;
  SweepSpec spec;
};

/// Meta-gradient variants in one comparison must search grids of equal size.
inline void audit_fairness(const std::vector<Variant>& variants) {
  std::optional<std::size_t> size;
  std::string first;
  for (const auto& v : variants) {
    const auto cfg = config_from_json(v.spec.base);
    if (cfg.meta.objective == metaopt::Objective::None) continue;
    const std::size_t n = v.spec.cardinality();
    if (!size) {
      size = n;
      first = v.name;
    } else if (*size != n) {
      throw UsageError("unfair comparison: variant '" + v.name + "' sweeps " + std::to_string(n) +
                       " configurations but '" + first + "' sweeps " + std::to_string(*size));
    }
  }
}

inline std::vector<Variant> variants_from_json(const json& j) {
  detail::Section top(j, "comparison");
  const json* vs = top.sub("variants");
  if (!vs || !vs->is_object() || vs->empty()) throw UsageError("comparison needs a non-empty 'variants' object");
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;
  top.get("seeds", seeds);
  top.get("first_seed", first_seed);
  std::vector<Variant> out;
  for (auto it = vs->begin(); it != vs->end(); ++it) {
    json spec = it.value();
    if (!spec.contains("seeds")) spec["seeds"] = seeds;
    if (!spec.contains("first_seed")) spec["first_seed"] = first_seed;
    out.push_back({it.key(), sweep_from_json(spec)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Non-stationarity sweeps

struct FreqSweepSpec {
  ExperimentConfig method;
  ExperimentConfig baseline;
  std::vector<std::uint64_t> periods;
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;
};

inline FreqSweepSpec freq_sweep_from_json(const json& j) {
  FreqSweepSpec s;
  detail::Section top(j, "freq_sweep");
  const json* m = top.sub("method");
  const json* b = top.sub("baseline");
  if (!m || !b) throw UsageError("freq sweep needs 'method' and 'baseline' configs");
  s.method = config_from_json(*m);
  s.baseline = config_from_json(*b);
  top.get("periods", s.periods);
  top.get("seeds", s.seeds);
  top.get("first_seed", s.first_seed);
  if (s.periods.empty()) throw UsageError("freq sweep needs at least one period");
  for (auto p : s.periods)
    if (p == 0) throw UsageError("freq sweep periods must be positive");
  if (s.seeds == 0) throw UsageError("freq sweep needs at least one seed");
  if (s.method.env.lifetime != s.baseline.env.lifetime)
    throw UsageError("method and baseline must share the same lifetime");
  return s;
}

struct FreqRow {
  std::uint64_t period = 0;
  std::string label;  // "method" or "baseline"
  std::vector<double> totals;
  Distribution dist;
  std::optional<RelativeImprovement> relative;  // method rows only
  std::string error;
};

inline std::vector<FreqRow> run_freq_sweep(const FreqSweepSpec& s, std::size_t workers) {
  std::vector<RunJob> jobs;
  for (auto p : s.periods)
    for (const auto* cfg : {&s.method, &s.baseline}) {
      ExperimentConfig c = *cfg;
      c.env.period = p;
      validate(c);
      for (std::size_t k = 0; k < s.seeds; ++k) jobs.push_back({c, s.first_seed + k, {}});
    }
  const auto outcomes = run_batch(jobs, workers, 1000000000ULL);
  std::vector<FreqRow> rows;
  std::size_t j = 0;
  for (auto p : s.periods) {
    for (const char* label : {"method", "baseline"}) {
      FreqRow row{p, label, {}, {}, std::nullopt, {}};
      for (std::size_t k = 0; k < s.seeds; ++k, ++j) {
        if (!outcomes[j].error.empty()) row.error = outcomes[j].error;
        else row.totals.push_back(*outcomes[j].total);
      }
      if (row.error.empty()) row.dist = describe(row.totals);
      rows.push_back(std::move(row));
    }
    auto& method = rows[rows.size() - 2];
    const auto& base = rows.back();
    if (method.error.empty() && base.error.empty()) {
      try {
        method.relative = relative_improvement(method.totals, base.totals);
      } catch (const UsageError& e) {
        method.error = e.what();
      }
    }
  }
  return rows;
}

inline std::string freq_summary_csv(const std::vector<FreqRow>& rows) {
  std::string out = "period,label,n,mean,std,median,q1,q3,relative_improvement,error\n";
  for (const auto& r : rows) {
    const bool ok = r.dist.n > 0;
    out += join_row({std::to_string(r.period), r.label, std::to_string(r.totals.size()),
                     ok ? format_number(r.dist.mean) : "", ok ? format_number(r.dist.std) : "",
                     ok ? format_number(r.dist.median) : "", ok ? format_number(r.dist.q1) : "",
                     ok ? format_number(r.dist.q3) : "", r.relative ? format_number(r.relative->percent) : "",
                     csv_escape(r.error)});
  }
  return out;
}

inline std::string freq_seeds_csv(const std::vector<FreqRow>& rows, std::uint64_t first_seed) {
  std::string out = "period,label,seed,total_return,relative_improvement\n";
  for (const auto& r : rows)
    for (std::size_t k = 0; k < r.totals.size(); ++k)
      out += join_row({std::to_string(r.period), r.label, std::to_string(first_seed + k), format_number(r.totals[k]),
                       r.relative ? format_number(r.relative->per_seed[k]) : ""});
  return out;
}

// ---------------------------------------------------------------------------
// Context richness ablation

enum class AblationMode { Prefix, Individual };

struct AblationSpec {
  ExperimentConfig base;
  std::size_t history = 4;
  AblationMode mode = AblationMode::Prefix;
  std::vector<context::Family> order{context::Family::Value,       context::Family::Reward,
                                     context::Family::TdError,     context::Family::ActionProbs,
                                     context::Family::GradCosine,  context::Family::PrevMeta,
                                     context::Family::States};
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;
};

inline AblationSpec ablation_from_json(const json& j) {
  AblationSpec s;
  detail::Section top(j, "ablation");
  const json* base = top.sub("base");
  if (!base) throw UsageError("ablation needs a 'base' config");
  s.base = config_from_json(*base);
  top.get("history", s.history);
  std::string mode = "prefix";
  top.get("mode", mode);
  s.mode = detail::parse_enum<AblationMode>(mode, {{"prefix", AblationMode::Prefix},
                                                    {"individual", AblationMode::Individual}}, "ablation mode");
  if (top.has("order")) {
    std::vector<std::string> names;
    top.get("order", names);
    s.order.clear();
    for (const auto& n : names) s.order.push_back(context::parse_family(n));
  } else {
    top.sub("order");
  }
  top.get("seeds", s.seeds);
  top.get("first_seed", s.first_seed);
  if (s.seeds == 0) throw UsageError("ablation needs at least one seed");
  if (s.base.meta.objective == metaopt::Objective::None) throw UsageError("ablation base must use mg or bmg");
  return s;
}

struct AblationArm {
  std::string label;
  ExperimentConfig config;
  std::size_t context_dim = 0;
  std::vector<double> totals;
  Distribution dist;
  std::string error;
};

/// "none" first, then either growing prefixes of `order` or each family alone.
inline std::vector<AblationArm> ablation_arms(const AblationSpec& s) {
  std::vector<AblationArm> arms;
  auto add = [&](std::string label, std::vector<context::Family> fams) {
    ExperimentConfig c = s.base;
    c.context.families = std::move(fams);
    c.context.history = s.history;
    for (const char* f : {"context.history", "meta.hidden"})
      if (std::find(c.overrides.begin(), c.overrides.end(), f) == c.overrides.end()) c.overrides.emplace_back(f);
    validate(c);
    const std::size_t dim = c.context.families.empty() ? 0 : [&] {
      auto spec = feature_spec(c);
      spec.num_meta = static_cast<std::size_t>(c.agent.tune_alpha_ent) + c.agent.tune_alpha_l2;
      if (c.agent.kind == AgentKind::QLambda) spec.num_meta = 1;
      return spec.dim();
    }();
    arms.push_back({std::move(label), std::move(c), dim, {}, {}, {}});
  };
  add("none", {});
  std::vector<context::Family> prefix;
  for (std::size_t i = 0; i < s.order.size(); ++i) {
    const std::string name(context::family_name(s.order[i]));
    if (s.mode == AblationMode::Prefix) {
      prefix.push_back(s.order[i]);
      add(i == 0 ? name : "+" + name, prefix);
    } else {
      add(name, {s.order[i]});
    }
  }
  return arms;
}

inline std::vector<AblationArm> run_ablation(const AblationSpec& s, std::size_t workers) {
  auto arms = ablation_arms(s);
  std::vector<RunJob> jobs;
  for (const auto& a : arms)
    for (std::size_t k = 0; k < s.seeds; ++k) jobs.push_back({a.config, s.first_seed + k, {}});
  const auto outcomes = run_batch(jobs, workers, 1000000000ULL);
  for (std::size_t i = 0; i < arms.size(); ++i) {
    for (std::size_t k = 0; k < s.seeds; ++k) {
      const auto& o = outcomes[i * s.seeds + k];
      if (!o.error.empty()) arms[i].error = o.error;
      else arms[i].totals.push_back(*o.total);
    }
    if (arms[i].error.empty()) arms[i].dist = describe(arms[i].totals);
  }
  return arms;
}

inline std::string ablation_summary_csv(const std::vector<AblationArm>& arms) {
  std::string out = "label,families,context_dim,n,mean,std,median,q1,q3,error\n";
  for (const auto& a : arms) {
    std::string fams;
    for (auto f : a.config.context.families) fams += (fams.empty() ? "" : "+") + std::string(context::family_name(f));
    const bool ok = a.error.empty();
    out += join_row({a.label, fams, std::to_string(a.context_dim), std::to_string(a.totals.size()),
                     ok ? format_number(a.dist.mean) : "", ok ? format_number(a.dist.std) : "",
                     ok ? format_number(a.dist.median) : "", ok ? format_number(a.dist.q1) : "",
                     ok ? format_number(a.dist.q3) : "", csv_escape(a.error)});
  }
  return out;
}

inline std::string ablation_seeds_csv(const std::vector<AblationArm>& arms, std::uint64_t first_seed) {
  std::string out = "label,seed,total_return\n";
  for (const auto& a : arms)
    for (std::size_t k = 0; k < a.totals.size(); ++k)
      out += join_row({a.label, std::to_string(first_seed + k), format_number(a.totals[k])});
  return out;
}

}  // namespace metalab::labcli
