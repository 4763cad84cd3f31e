#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "graphcaps/experiment/run.hpp"

namespace graphcaps::experiment {

enum class ReportFormat { Csv, Text };

inline std::string const kReportFooter =
    "Accuracy in percent: mean \xC2\xB1 population standard deviation over folds. "
    "Training time excludes tensorization.";

/// Row and column layout shared by both formats.
struct ReportTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  /// (row, column) -> accuracy cell and timing cell.
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::string, std::string>> cells;
};

inline std::string mean_pm_std(double mean, double std, double scale, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f \xC2\xB1 %.*f", decimals, mean * scale, decimals, std * scale);
  return buf;
}

inline std::string row_label(ExperimentConfig const& cfg) {
  auto label = variant_name(cfg);
  if (cfg.preset != "paper") label += " [" + cfg.preset + "]";
  return label;
}

inline ReportTable build_report_table(std::vector<ExperimentResult> const& results) {
  ReportTable t;
  auto find = [](std::vector<std::string> const& v, std::string const& s) {
    return static_cast<std::size_t>(std::find(v.begin(), v.end(), s) - v.begin());
  };
  auto intern = [&](std::vector<std::string>& v, std::string const& s) {
    auto const i = find(v, s);
    if (i == v.size()) v.push_back(s);
    return i;
  };
  for (auto const& r : results) {
    auto const col = intern(t.columns, r.config.dataset);
    auto label = row_label(r.config);
    // A second result for an occupied cell gets its own row.
    for (int dup = 2; find(t.rows, label) < t.rows.size() && t.cells.contains({find(t.rows, label), col}); ++dup) {
      label = row_label(r.config) + " #" + std::to_string(dup);
    }
    auto const row = intern(t.rows, label);
    t.cells[{row, col}] = {mean_pm_std(r.mean, r.std, 100.0, 2),
                           mean_pm_std(r.train_seconds_mean, r.train_seconds_std, 1.0, 2)};
  }
  return t;
}

inline std::string csv_field(std::string const& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

inline std::string render_csv(ReportTable const& t, bool timings) {
  std::ostringstream os;
  os << "variant";
  for (auto const& c : t.columns) os << ',' << csv_field(c);
  os << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    os << csv_field(t.rows[r]);
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      os << ',';
      if (auto it = t.cells.find({r, c}); it != t.cells.end()) os << (timings ? it->second.second : it->second.first);
    }
    os << '\n';
  }
  return os.str();
}

/// Display width in code points, so the multi-byte "±" counts once.
inline std::size_t display_width(std::string const& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
}

inline std::string render_text(ReportTable const& t, bool timings) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({timings ? "Train s/fold" : "Accuracy %"});
  for (auto const& c : t.columns) grid.back().push_back(c);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    grid.push_back({t.rows[r]});
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      auto it = t.cells.find({r, c});
      grid.back().push_back(it == t.cells.end() ? "-" : (timings ? it->second.second : it->second.first));
    }
  }
  std::vector<std::size_t> width(t.columns.size() + 1, 0);
  for (auto const& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], display_width(line[i]));
  }
  std::ostringstream os;
  for (std::size_t l = 0; l < grid.size(); ++l) {
    std::string text;
    for (std::size_t i = 0; i < grid[l].size(); ++i) {
      auto const pad = width[i] - display_width(grid[l][i]);
      if (i == 0) {
        text += grid[l][i] + std::string(pad, ' ');
      } else {
        text += "  " + std::string(pad, ' ') + grid[l][i];
      }
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    os << text << '\n';
    if (l == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

inline std::string render_report(std::vector<ExperimentResult> const& results, ReportFormat format) {
  auto const t = build_report_table(results);
  if (format == ReportFormat::Csv) return render_csv(t, false);
  return render_text(t, false) + "\n" + render_text(t, true) + "\n" + kReportFooter + "\n";
}

/// Writes report.csv, report_timings.csv and report.txt into `dir`.
inline void emit_report(std::vector<ExperimentResult> const& results, std::filesystem::path const& dir) {
  auto const t = build_report_table(results);
  write_text_atomic(dir / "report.csv", render_csv(t, false));
  write_text_atomic(dir / "report_timings.csv", render_csv(t, true));
  write_text_atomic(dir / "report.txt", render_report(results, ReportFormat::Text));
}

}  // namespace graphcaps::experiment
