#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metalab/errors.hpp"
#include "metalab/labcli/runner.hpp"
#include "metalab/labcli/stats.hpp"

namespace metalab::labcli {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw UsageError("column '" + name + "' is missing");
  }
  bool has(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out(1);
  for (char ch : line) {
    if (ch == ',') out.emplace_back();
    else if (ch != '\r') out.back() += ch;
  }
  return out;
}

/// Numeric metrics CSV as written by run_experiment.
inline CsvTable parse_metrics_csv(const std::string& text, const std::string& origin = "metrics") {
  CsvTable t;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw StructuralError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                            " fields");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw StructuralError(origin + ":" + std::to_string(line_no) + ": '" + c + "' is not a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw StructuralError(origin + " has no header");
  return t;
}

enum class PlotKind { Schedule, Probes, Freq };

inline PlotKind parse_plot_kind(const std::string& s) {
  if (s == "schedule") return PlotKind::Schedule;
  if (s == "probes") return PlotKind::Probes;
  if (s == "freq") return PlotKind::Freq;
  throw UsageError("unknown plot kind '" + s + "' (expected schedule, probes or freq)");
}

/// Seed files for one curve or one point of a plot.
struct PlotGroup {
  std::string label;
  std::vector<CsvTable> seeds;
};

namespace detail {

inline std::vector<std::string> schedule_columns(const CsvTable& t) {
  std::vector<std::string> cols{"mean_rollout_reward"};
  for (const char* m : {"alpha_ent", "alpha_l2", "epsilon"})
    if (t.has(m)) cols.emplace_back(m);
  return cols;
}

inline std::vector<std::string> probe_columns(const CsvTable& t) {
  std::vector<std::string> cols;
  for (auto p : context::kProbeNames) {
    const std::string name = "probe_" + std::string(p);
    if (!t.has(name)) throw UsageError("probes absent: metrics have no '" + name + "' column");
    cols.push_back(name);
  }
  return cols;
}

}  // namespace detail

/// Aggregates seed files per group. Every group must hold the same number of seeds.
inline std::string emit_plotdata(const std::vector<PlotGroup>& groups, PlotKind kind) {
  if (groups.empty()) throw UsageError("plotdata needs at least one metrics file");
  for (const auto& g : groups) {
    if (g.seeds.empty()) throw UsageError("plot group '" + g.label + "' has no metrics files");
    if (g.seeds.size() != groups.front().seeds.size())
      throw UsageError("seed-count mismatch: group '" + g.label + "' has " + std::to_string(g.seeds.size()) +
                       " files but '" + groups.front().label + "' has " + std::to_string(groups.front().seeds.size()));
  }

  if (kind == PlotKind::Freq) {
    std::string out = "label,n,median,q1,q3,mean\n";
    for (const auto& g : groups) {
      std::vector<double> totals;
      for (const auto& t : g.seeds) {
        if (t.rows.empty()) throw StructuralError("metrics file in group '" + g.label + "' has no rows");
        totals.push_back(t.rows.back()[t.column("cumulative_return")]);
      }
      const auto d = describe(totals);
      out += join_row({g.label, std::to_string(d.n), format_number(d.median), format_number(d.q1), format_number(d.q3),
                       format_number(d.mean)});
    }
    return out;
  }

  const auto& first = groups.front().seeds.front();
  const auto cols = kind == PlotKind::Schedule ? detail::schedule_columns(first) : detail::probe_columns(first);
  std::vector<std::string> header{"label", "env_step"};
  for (const auto& c : cols) {
    if (kind == PlotKind::Schedule) header.insert(header.end(), {c + "_mean", c + "_ci_low", c + "_ci_high"});
    else header.insert(header.end(), {c + "_mean", c + "_std"});
  }
  std::string out = join_row(header);
  for (const auto& g : groups) {
    const auto& ref = g.seeds.front();
    const std::size_t step_col = ref.column("env_step");
    for (const auto& t : g.seeds) {
      if (t.rows.size() != ref.rows.size())
        throw StructuralError("group '" + g.label + "' mixes runs with different logged steps");
      if (kind == PlotKind::Probes) detail::probe_columns(t);
    }
    for (std::size_t r = 0; r < ref.rows.size(); ++r) {
      const double step = ref.rows[r][step_col];
      std::vector<std::string> row{g.label, format_number(step)};
      for (const auto& c : cols) {
        std::vector<double> xs;
        for (const auto& t : g.seeds) {
          if (t.rows[r][t.column("env_step")] != step)
            throw StructuralError("group '" + g.label + "' mixes runs with different logged steps");
          xs.push_back(t.rows[r][t.column(c)]);
        }
        const double m = mean_of(xs);
        const double s = std_of(xs);
        if (kind == PlotKind::Schedule) {
          const double half = 1.96 * s / std::sqrt(static_cast<double>(xs.size()));
          row.insert(row.end(), {format_number(m), format_number(m - half), format_number(m + half)});
        } else {
          row.insert(row.end(), {format_number(m), format_number(s)});
        }
      }
      out += join_row(row);
    }
  }
  return out;
}

}  // namespace metalab::labcli
