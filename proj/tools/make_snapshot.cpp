// Generates the bundled synthetic datasets in the ECDC variant-surveillance
// CSV schema:
//   make_snapshot <snapshot.csv.gz> <tiny.csv>
//
// The snapshot covers 30 EU/EEA countries, 21 GISAID variants (plus one
// TESSy-only variant that the source filter drops), weeks 2020-01..2022-44.
// Each variant is an epidemic pulse with per-country scale factors,
// multiplicative noise and occasional outlier spikes; zero-detection weeks
// are mostly omitted, as in the upstream feed. Output is deterministic,
// including the gzip container (fixed header fields).

#include <zlib.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "casecast/core.hpp"
#include "casecast/weeks.hpp"

using casecast::Rng;
using casecast::YearWeek;

namespace {

struct Pulse {
  const char* variant;
  int start, peak, end;  // week indices
  double width, amplitude;
};

const std::vector<std::string> kCountries = {
    "Austria", "Belgium",  "Bulgaria", "Croatia",       "Cyprus",    "Czechia",
    "Denmark", "Estonia",  "Finland",  "France",        "Germany",   "Greece",
    "Hungary", "Iceland",  "Ireland",  "Italy",         "Latvia",    "Liechtenstein",
    "Lithuania", "Luxembourg", "Malta", "Netherlands",  "Norway",    "Poland",
    "Portugal", "Romania", "Slovakia", "Slovenia",      "Spain",     "Sweden"};

// Week indices: 2020 holds 0..52 (53 ISO weeks), 2021 holds 53..104,
// 2022-01..2022-44 hold 105..148.
const std::vector<Pulse> kPulses = {
    {"B.1.1.7", 37, 62, 95, 10, 3000},
    {"B.1.351", 44, 65, 90, 9, 150},
    {"B.1.427/B.1.429", 53, 62, 80, 6, 40},
    {"B.1.525", 54, 66, 85, 7, 60},
    {"B.1.617.1", 62, 72, 90, 6, 50},
    {"B.1.617.2", 67, 97, 115, 12, 20000},
    {"B.1.620", 62, 70, 83, 5, 30},
    {"B.1.621", 67, 85, 100, 8, 80},
    {"BA.1", 96, 106, 120, 5, 30000},
    {"BA.2", 102, 116, 135, 7, 50000},
    {"BA.2.75", 129, 146, 148, 8, 500},
    {"BA.4", 114, 131, 148, 7, 3000},
    {"BA.5", 116, 134, 148, 8, 40000},
    {"BQ.1", 134, 148, 148, 7, 2000},
    {"C.37", 72, 82, 93, 5, 25},
    {"Other", 0, 74, 148, 60, 200},
    {"P.1", 58, 75, 93, 8, 120},
    {"P.3", 60, 68, 78, 4, 15},
    {"UNK", 0, 10, 70, 18, 400},
    {"XBB", 139, 148, 148, 5, 300},
};

std::string country_code(const std::string& name) {
  std::string code;
  code += static_cast<char>(std::toupper(name[0]));
  code += static_cast<char>(std::toupper(name[1]));
  return code;
}

struct RowSink {
  std::string csv =
      "country,country_code,year_week,source,new_cases,number_sequenced,variant,"
      "number_detections_variant,percent_variant\n";

  void row(const std::string& country, const std::string& week, const char* source,
           const std::string& variant, long long detections, Rng& rng) {
    const long long sequenced =
        detections + static_cast<long long>(std::llround(rng.uniform(0, 40)));
    const long long cases =
        sequenced * static_cast<long long>(std::llround(rng.uniform(3, 25)));
    const double pct = sequenced > 0
                           ? 100.0 * static_cast<double>(detections) /
                                 static_cast<double>(sequenced)
                           : 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", pct);
    csv += country + "," + country_code(country) + "," + week + "," + source + "," +
           std::to_string(cases) + "," + std::to_string(sequenced) + "," + variant + "," +
           std::to_string(detections) + "," + buf + "\n";
  }
};

std::vector<std::string> week_labels(int year, int week, std::size_t count) {
  std::vector<std::string> out;
  YearWeek yw{year, week};
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(casecast::format_year_week(yw));
    yw = casecast::next_week(yw);
  }
  return out;
}

void emit_pulse(RowSink& sink, const Pulse& p, const std::vector<std::string>& countries,
                const std::vector<std::string>& weeks, Rng& rng,
                const std::vector<double>& country_factor, bool force_range_rows) {
  for (std::size_t c = 0; c < countries.size(); ++c) {
    for (int t = p.start; t <= p.end && t < static_cast<int>(weeks.size()); ++t) {
      const double rel = (t - p.peak) / p.width;
      double value = p.amplitude * std::exp(-0.5 * rel * rel) * country_factor[c];
      value *= rng.uniform(0.6, 1.4);
      if (rng.next_unit() < 0.01) value *= 8.0;  // outlier spike weeks
      const long long count = std::llround(value);
      const bool range_pin =
          force_range_rows && (t == 0 || t + 1 == static_cast<int>(weeks.size()));
      if (count > 0 || range_pin || rng.next_unit() < 0.08) {
        sink.row(countries[c], weeks[t], "GISAID", p.variant, count < 0 ? 0 : count, rng);
        if (rng.next_unit() < 0.25) {
          const long long tessy = std::llround(value * rng.uniform(0.7, 1.2));
          sink.row(countries[c], weeks[t], "TESSy", p.variant, tessy < 0 ? 0 : tessy, rng);
        }
      }
    }
  }
}

std::string build_snapshot() {
  Rng rng(20221207u);
  const auto weeks = week_labels(2020, 1, 149);

  std::vector<double> factor(kCountries.size());
  for (std::size_t c = 0; c < kCountries.size(); ++c) {
    Rng crng = rng.split("country-factor=" + kCountries[c]);
    factor[c] = std::exp(crng.uniform(-3.0, 1.3));
  }

  RowSink sink;
  for (const auto& p : kPulses) {
    const bool pin = std::string(p.variant) == "Other";
    emit_pulse(sink, p, kCountries, weeks, rng, factor, pin);
  }

  // Sparse hospital-cluster variant: a handful of 0/1 weeks in France, all
  // inside the training region.
  for (int t = 60; t <= 72; ++t) {
    const long long count = rng.next_unit() < 0.5 ? 1 : 0;
    sink.row("France", weeks[t], "GISAID", "B.1.616", count, rng);
  }

  // TESSy-only variant; the GISAID filter drops it entirely.
  for (int t = 90; t <= 110; ++t) {
    for (const char* country : {"France", "Belgium"}) {
      if (rng.next_unit() < 0.6) {
        sink.row(country, weeks[t], "TESSy", "B.1.640",
                 std::llround(rng.uniform(1, 30)), rng);
      }
    }
  }
  return sink.csv;
}

std::string build_tiny() {
  Rng rng(40u);
  const auto weeks = week_labels(2021, 1, 40);
  const std::vector<std::string> countries = {"Austria", "Belgium"};
  const std::vector<double> factor = {1.0, 0.7};

  RowSink sink;
  emit_pulse(sink, {"B.1.1.7", 0, 10, 25, 6, 200}, countries, weeks, rng, factor, false);
  emit_pulse(sink, {"B.1.617.2", 12, 30, 39, 8, 500}, countries, weeks, rng, factor, false);
  emit_pulse(sink, {"Other", 0, 20, 39, 25, 50}, countries, weeks, rng, factor, true);
  for (int t = 15; t <= 25; ++t) {
    sink.row("Austria", weeks[t], "TESSy", "B.1.640", std::llround(rng.uniform(1, 10)), rng);
  }
  return sink.csv;
}

// gzip with pinned header fields (mtime 0, OS code 3) so regeneration is
// byte-identical.
std::string gzip_deterministic(const std::string& in) {
  z_stream strm{};
  if (deflateInit2(&strm, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) !=
      Z_OK) {
    std::fprintf(stderr, "deflateInit2 failed\n");
    std::exit(1);
  }
  gz_header header{};
  header.time = 0;
  header.os = 3;
  deflateSetHeader(&strm, &header);

  std::string out;
  out.resize(deflateBound(&strm, static_cast<uLong>(in.size())));
  strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  strm.avail_in = static_cast<uInt>(in.size());
  strm.next_out = reinterpret_cast<Bytef*>(out.data());
  strm.avail_out = static_cast<uInt>(out.size());
  if (deflate(&strm, Z_FINISH) != Z_STREAM_END) {
    std::fprintf(stderr, "deflate failed\n");
    std::exit(1);
  }
  out.resize(strm.total_out);
  deflateEnd(&strm);
  return out;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    std::fprintf(stderr, "cannot write %s\n", path.c_str());
    std::exit(1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: make_snapshot <snapshot.csv.gz> <tiny.csv>\n");
    return 2;
  }
  write_bytes(argv[1], gzip_deterministic(build_snapshot()));
  write_bytes(argv[2], build_tiny());
  std::printf("wrote %s and %s\n", argv[1], argv[2]);
  return 0;
}
