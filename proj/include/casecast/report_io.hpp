#pragma once

// Report files for a sweep run. Everything is written atomically
// (temp + rename) so a partial run never looks complete, and all numeric
// formatting is fixed ("%.17g"), so a rerun under the same seed regenerates
// every table and trace byte-identically. The manifest is the one file with
// volatile content (wall time).
//
// Files written into the output directory:
//   stage1_cells.csv / stage2_cells.csv   every trained cell
//   stage1_min_mse.csv / stage1_min_rmse.csv   per-variant minima per kind
//   stage2_min_mse.csv / stage2_min_rmse.csv
//   stage1_tally.csv / stage2_tally.csv   minimum-loss frequency tallies
//   traces/<variant>_<country>.csv        week,actual,predicted for the
//                                         selected configuration
//   manifest.txt                          config, seeds, selections, checks

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "casecast/errors.hpp"
#include "casecast/experiment.hpp"

namespace casecast {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " -> " + path + ": " + ec.message());
}

inline std::string sanitize_filename(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-';
    out += ok ? c : '_';
  }
  return out;
}

namespace detail {

inline std::string kind_column(ModelKind k) {
  std::string n = kind_name(k);
  for (auto& c : n) c = static_cast<char>(std::tolower(c));
  return n;
}

inline std::string cells_csv(const StageResult& stage) {
  std::string out =
      "variant,kind,mode,hidden,layers,seed,input_dim,output_dim,param_count,diverged,mse,rmse\n";
  for (const auto& c : stage.cells) {
    out += c.variant;
    out += ',';
    out += kind_name(c.kind);
    out += ',';
    out += mode_name(c.mode);
    out += ',' + std::to_string(c.hidden) + ',' + std::to_string(c.layers) + ',' +
           std::to_string(c.seed) + ',' + std::to_string(c.input_dim) + ',' +
           std::to_string(c.output_dim) + ',' + std::to_string(c.param_count) + ',' +
           (c.diverged ? "1" : "0") + ',' + fmt_double(c.loss.mse) + ',' +
           fmt_double(c.loss.rmse) + '\n';
  }
  return out;
}

// Per-variant minimum over the stage's candidate sizes, one column per kind —
// the stage's summary table. Diverged cells are skipped; a kind whose every
// cell diverged prints "diverged".
inline std::string min_table_csv(const StageResult& stage, const std::vector<ModelKind>& kinds,
                                 bool use_rmse) {
  std::map<std::string, std::map<std::string, double>> best;  // variant -> kind -> min
  std::vector<std::string> variants;
  for (const auto& c : stage.cells) {
    if (best.find(c.variant) == best.end()) variants.push_back(c.variant);
    auto& row = best[c.variant];
    if (c.diverged) continue;
    const double v = use_rmse ? c.loss.rmse : c.loss.mse;
    const std::string k = kind_name(c.kind);
    auto it = row.find(k);
    if (it == row.end() || v < it->second) row[k] = v;
  }
  std::string out = "variant";
  for (ModelKind k : kinds) out += std::string(",") + (use_rmse ? "rmse_" : "mse_") + kind_column(k);
  out += '\n';
  for (const auto& v : variants) {
    out += v;
    for (ModelKind k : kinds) {
      auto it = best[v].find(kind_name(k));
      out += ',';
      out += it == best[v].end() ? "diverged" : fmt_double(it->second);
    }
    out += '\n';
  }
  return out;
}

inline std::string tally_csv(const StageResult& stage, const std::vector<ModelKind>& kinds) {
  std::string out = stage.axis;
  for (ModelKind k : kinds) out += ",tally_" + kind_column(k);
  out += ",tally_combined\n";
  for (std::size_t s : stage.candidates) {
    out += std::to_string(s);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      auto kit = stage.tally.find(k);
      const std::size_t n = kit == stage.tally.end() ? 0 : kit->second.at(s);
      out += ',' + std::to_string(n);
    }
    out += ',' + std::to_string(stage.combined_tally.at(s)) + '\n';
  }
  return out;
}

inline const CellResult* find_cell(const StageResult& stage, const std::string& variant,
                                   ModelKind kind, std::size_t hidden, std::size_t layers) {
  for (const auto& c : stage.cells) {
    if (c.variant == variant && c.kind == kind && c.hidden == hidden && c.layers == layers)
      return &c;
  }
  return nullptr;
}

}  // namespace detail

// Direction checks against the study this protocol follows; recorded in the
// manifest as pass/flag, never enforced.
inline std::string qualitative_hidden25(const ExperimentReport& report) {
  bool has25 = false;
  for (std::size_t s : report.config.hidden_sizes) has25 |= s == 25;
  if (!has25) return "n/a";
  return report.selected_hidden == 25 ? "pass" : "flag";
}

struct SweepRunInfo {
  std::string data_path;
  std::uint64_t data_checksum = 0;
  double wall_seconds = 0.0;
};

inline std::string manifest_text(const ExperimentReport& report, const SweepRunInfo& info) {
  const ExperimentConfig& cfg = report.config;
  std::string kinds;
  for (std::size_t i = 0; i < cfg.kinds.size(); ++i)
    kinds += std::string(i ? "," : "") + kind_name(cfg.kinds[i]);
  auto join = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  char checksum[32];
  std::snprintf(checksum, sizeof(checksum), "%016llx",
                static_cast<unsigned long long>(info.data_checksum));

  std::string out;
  out += "format_version: 1\n";
  out += "command: sweep\n";
  out += std::string("mode: ") + mode_name(cfg.mode) + "\n";
  out += "kinds: " + kinds + "\n";
  out += "hidden_sizes: " + join(cfg.hidden_sizes) + "\n";
  out += "layer_sizes: " + join(cfg.layer_sizes) + "\n";
  out += "epochs: " + std::to_string(cfg.epochs) + "\n";
  out += "window: " + std::to_string(cfg.window) + "\n";
  out += "learning_rate: " + fmt_double(cfg.learning_rate) + "\n";
  out += "train_weeks: " + std::to_string(cfg.train_weeks) + "\n";
  out += "test_weeks: " + std::to_string(cfg.test_weeks) + "\n";
  out += "master_seed: " + std::to_string(cfg.seed) + "\n";
  out += "jobs: " + std::to_string(cfg.jobs) + "\n";
  out += "data_path: " + info.data_path + "\n";
  out += std::string("data_checksum_fnv1a64: ") + checksum + "\n";
  out += "variant_count: " + std::to_string(report.variants.size()) + "\n";
  out += "country_count: " + std::to_string(report.countries.size()) + "\n";
  out += "selected_hidden: " + std::to_string(report.selected_hidden) + "\n";
  out += "selected_layers: " + std::to_string(report.selected_layers) + "\n";
  out += std::string("headline_kind: ") + kind_name(report.headline_kind) + "\n";
  out += "diverged_cells: " +
         std::to_string(report.hidden_stage.diverged_cells.size() +
                        report.layer_stage.diverged_cells.size()) +
         "\n";
  for (const auto& stage : {&report.hidden_stage, &report.layer_stage})
    for (const auto& key : stage->diverged_cells) out += "diverged_cell: " + key + "\n";
  out += "qualitative_hidden25_largest_tally: " + qualitative_hidden25(report) + "\n";
  out += "wall_time_seconds: " + fmt_double(info.wall_seconds) + "\n";
  return out;
}

// Writes the full report file set. Traces cover the selected configuration
// (headline kind at selected hidden/layers) for every (variant, country).
inline void write_report_files(const ExperimentReport& report, const std::string& out_dir,
                               const SweepRunInfo& info) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  fs::create_directories(out_dir + "/traces", ec);
  if (ec) throw IoError("cannot create " + out_dir + "/traces: " + ec.message());

  const auto& kinds = report.config.kinds;
  write_file_atomic(out_dir + "/stage1_cells.csv", detail::cells_csv(report.hidden_stage));
  write_file_atomic(out_dir + "/stage2_cells.csv", detail::cells_csv(report.layer_stage));
  write_file_atomic(out_dir + "/stage1_min_mse.csv",
                    detail::min_table_csv(report.hidden_stage, kinds, false));
  write_file_atomic(out_dir + "/stage1_min_rmse.csv",
                    detail::min_table_csv(report.hidden_stage, kinds, true));
  write_file_atomic(out_dir + "/stage2_min_mse.csv",
                    detail::min_table_csv(report.layer_stage, kinds, false));
  write_file_atomic(out_dir + "/stage2_min_rmse.csv",
                    detail::min_table_csv(report.layer_stage, kinds, true));
  write_file_atomic(out_dir + "/stage1_tally.csv",
                    detail::tally_csv(report.hidden_stage, kinds));
  write_file_atomic(out_dir + "/stage2_tally.csv", detail::tally_csv(report.layer_stage, kinds));

  for (const auto& variant : report.variants) {
    const CellResult* cell =
        detail::find_cell(report.layer_stage, variant, report.headline_kind,
                          report.selected_hidden, report.selected_layers);
    if (!cell) continue;
    for (std::size_t c = 0; c < report.countries.size(); ++c) {
      std::string csv = "week,actual,predicted\n";
      for (std::size_t w = 0; w < report.test_week_labels.size(); ++w) {
        csv += report.test_week_labels[w] + ',' + fmt_double(cell->actuals(w, c)) + ',' +
               fmt_double(cell->predictions(w, c)) + '\n';
      }
      write_file_atomic(out_dir + "/traces/" + sanitize_filename(variant) + "_" +
                            sanitize_filename(report.countries[c]) + ".csv",
                        csv);
    }
  }
  write_file_atomic(out_dir + "/manifest.txt", manifest_text(report, info));
}

// Minimal read-back of a cells CSV, for comparing two finished runs.
struct CellSummary {
  std::string variant;
  std::string mode;
  bool diverged = false;
  double mse = 0.0;
};

inline std::vector<CellSummary> read_cells_csv(const std::string& path) {
  const auto rows = detail::read_csv(read_file_bytes(path));
  if (rows.empty()) throw FormatError("empty cells file " + path);
  const auto& header = rows.front().fields;
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("cells file " + path + " missing column '" + name + "'");
  };
  const std::size_t c_variant = column("variant"), c_mode = column("mode"),
                    c_diverged = column("diverged"), c_mse = column("mse");
  std::vector<CellSummary> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    CellSummary s;
    s.variant = f[c_variant];
    s.mode = f[c_mode];
    s.diverged = f[c_diverged] == "1";
    s.mse = s.diverged ? 0.0 : std::strtod(f[c_mse].c_str(), nullptr);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::map<std::string, double> minima_from_cells(const std::vector<CellSummary>& cells) {
  std::map<std::string, double> out;
  for (const auto& c : cells) {
    if (c.diverged) continue;
    auto it = out.find(c.variant);
    if (it == out.end() || c.mse < it->second) out[c.variant] = c.mse;
  }
  return out;
}

inline std::string comparison_csv(const ComparisonTable& table) {
  std::string out = "variant,mse_univariate,mse_multivariate,winner\n";
  for (const auto& row : table.rows) {
    const char* w = row.winner < 0 ? "univariate" : row.winner > 0 ? "multivariate" : "tie";
    out += row.variant + ',' + fmt_double(row.mse_univariate) + ',' +
           fmt_double(row.mse_multivariate) + ',' + w + '\n';
  }
  return out;
}

}  // namespace casecast
