// Copyright 2026 The ECFT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Results tables (arms x directions) and validation curves collected from
// run directories.

#ifndef ECFT_REPORT_HPP
#define ECFT_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/io.hpp"

namespace ecft {

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string direction_name(const std::string& src, const std::string& tgt) { return src + "->" + tgt; }

/// Rows are arms, columns are directions, cells hold one value per seed and
/// display their median. Absent cells render as "missing".
class ResultsTable {
 public:
  void add_row(const std::string& arm) {
    if (std::find(rows_.begin(), rows_.end(), arm) == rows_.end()) rows_.push_back(arm);
  }
  void add_column(const std::string& dir) {
    if (std::find(cols_.begin(), cols_.end(), dir) == cols_.end()) cols_.push_back(dir);
  }
  void add(const std::string& arm, const std::string& dir, double bleu) {
    add_row(arm);
    add_column(dir);
    cells_[{arm, dir}].push_back(bleu);
  }

  const std::vector<std::string>& rows() const { return rows_; }
  const std::vector<std::string>& columns() const { return cols_; }

  std::optional<double> cell(const std::string& arm, const std::string& dir) const {
    auto it = cells_.find({arm, dir});
    if (it == cells_.end() || it->second.empty()) return std::nullopt;
    return median(it->second);
  }
  int count(const std::string& arm, const std::string& dir) const {
    auto it = cells_.find({arm, dir});
    return it == cells_.end() ? 0 : static_cast<int>(it->second.size());
  }

  /// Percent change of `arm` over `base` in a column, when both are present
  /// and the base is nonzero.
  std::optional<double> relative_gain(const std::string& arm, const std::string& base, const std::string& dir) const {
    const auto a = cell(arm, dir);
    const auto b = cell(base, dir);
    if (!a || !b || *b == 0.0) return std::nullopt;
    return 100.0 * (*a - *b) / *b;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "arm";
    for (const auto& c : cols_) os << "," << c;
    os << "\n";
    for (const auto& r : rows_) {
      os << r;
      for (const auto& c : cols_) {
        os << ",";
        if (auto v = cell(r, c)) os << format(*v);
        else os << "missing";
      }
      os << "\n";
    }
    return os.str();
  }

  /// Aligned table; with a baseline row present, a gain line per other arm.
  std::string to_text(const std::string& baseline = "baseline") const {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> head{"arm"};
    head.insert(head.end(), cols_.begin(), cols_.end());
    grid.push_back(head);
    for (const auto& r : rows_) {
      std::vector<std::string> line{r};
      for (const auto& c : cols_) {
        auto v = cell(r, c);
        line.push_back(v ? format(*v) : "missing");
      }
      grid.push_back(line);
    }
    const bool has_base = std::find(rows_.begin(), rows_.end(), baseline) != rows_.end();
    if (has_base) {
      for (const auto& r : rows_) {
        if (r == baseline) continue;
        std::vector<std::string> line{r + " vs " + baseline};
        for (const auto& c : cols_) {
          auto g = relative_gain(r, baseline, c);
          line.push_back(g ? signed_percent(*g) : "-");
        }
        grid.push_back(line);
      }
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& line : grid)
      for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::ostringstream os;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (std::size_t i = 0; i < grid[k].size(); ++i) {
        const std::string& s = grid[k][i];
        if (i == 0) os << s << std::string(width[i] - s.size(), ' ');
        else os << "  " << std::string(width[i] - s.size(), ' ') << s;
      }
      os << "\n";
      if (k == 0 || k == rows_.size()) {
        std::size_t total = 0;
        for (std::size_t w : width) total += w + 2;
        if (k == 0 || has_base) os << std::string(total - 2, '-') << "\n";
      }
    }
    return os.str();
  }

  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }
  static std::string signed_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", v);
    return buf;
  }

 private:
  std::vector<std::string> rows_;
  std::vector<std::string> cols_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells_;
};

/// Published test BLEU of the three arms, for checking table rendering only.
inline ResultsTable paper_fixture_table() {
  const std::vector<std::string> langs{"zh", "de", "ne", "si"};
  const std::vector<std::pair<std::string, std::vector<double>>> rows{
      {"baseline", {17.21, 18.66, 1.77, 1.96, 11.35, 25.83, 4.74, 4.53}},
      {"i2i", {17.58, 18.85, 0.02, 0.01, 11.35, 25.71, 0.08, 0.06}},
      {"t2i", {19.44, 18.26, 1.98, 2.05, 12.32, 25.77, 6.20, 5.00}}};
  ResultsTable t;
  for (const auto& l : langs) t.add_column(direction_name("en", l));
  for (const auto& l : langs) t.add_column(direction_name(l, "en"));
  for (const auto& [arm, vals] : rows)
    for (std::size_t i = 0; i < vals.size(); ++i)
      t.add(arm, i < 4 ? direction_name("en", langs[i]) : direction_name(langs[i - 4], "en"), vals[i]);
  return t;
}

struct CurvePoint {
  std::uint64_t seed = 0;
  int bt_step = 0;
  double bleu = 0.0;
};

struct CollectedRuns {
  ResultsTable table;
  /// (arm, direction) -> validation points of every seed.
  std::map<std::pair<std::string, std::string>, std::vector<CurvePoint>> curves;
  int completed = 0;
};

namespace detail {
inline void find_run_dirs(const std::filesystem::path& root, std::vector<std::filesystem::path>& out) {
  if (!std::filesystem::is_directory(root)) return;
  if (std::filesystem::exists(root / "run.json")) {
    out.push_back(root);
    return;
  }
  std::vector<std::filesystem::path> kids;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) kids.push_back(e.path());
  std::sort(kids.begin(), kids.end());
  for (const auto& k : kids) find_run_dirs(k, out);
}
}  // namespace detail

/// Scans the given roots for run directories (those holding run.json). Test
/// BLEU comes from best.json; curves come from the eval events of
/// metrics.jsonl, so unfinished runs still contribute curves.
inline CollectedRuns collect_runs(const std::vector<std::filesystem::path>& roots) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& r : roots) detail::find_run_dirs(r, dirs);
  CollectedRuns out;
  for (const char* arm : {"baseline", "i2i", "t2i"}) out.table.add_row(arm);
  for (const auto& d : dirs) {
    const Json run = read_json_file(d / "run.json");
    const std::string arm = run.at("arm").get<std::string>();
    const std::string lang = run.at("language").get<std::string>();
    const std::string pivot = run.value("pivot", std::string("pivot"));
    const auto seed = run.at("seed").get<std::uint64_t>();
    const std::string fwd = direction_name(pivot, lang);
    const std::string bwd = direction_name(lang, pivot);
    out.table.add_row(arm);
    out.table.add_column(fwd);
    out.table.add_column(bwd);
    if (std::filesystem::exists(d / "best.json")) {
      const Json best = read_json_file(d / "best.json");
      out.table.add(arm, fwd, best.at("test_bleu_forward").get<double>());
      out.table.add(arm, bwd, best.at("test_bleu_backward").get<double>());
      ++out.completed;
    }
    if (std::filesystem::exists(d / "metrics.jsonl")) {
      for (const Json& j : read_jsonl(d / "metrics.jsonl")) {
        if (j.value("event", "") != "eval") continue;
        const Json& r = j.at("record");
        const int step = r.at("bt_step").get<int>();
        out.curves[{arm, fwd}].push_back({seed, step, r.at("val_bleu_forward").get<double>()});
        out.curves[{arm, bwd}].push_back({seed, step, r.at("val_bleu_backward").get<double>()});
      }
    }
  }
  return out;
}

inline std::string curve_csv(const std::vector<CurvePoint>& pts) {
  std::ostringstream os;
  os << "seed,bt_step,val_bleu\n";
  for (const auto& p : pts) os << p.seed << "," << p.bt_step << "," << ResultsTable::format(p.bleu) << "\n";
  return os.str();
}

}  // namespace ecft

#endif  // ECFT_REPORT_HPP
