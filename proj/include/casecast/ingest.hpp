#pragma once

// ECDC variant-surveillance CSV ingestion: parse, filter by data source, and
// pivot into per-variant country x week panels.
//
// Input is UTF-8, comma-delimited, RFC 4180 quoting, header row required.
// Columns are matched by header name (the upstream schema gains columns over
// time); the ones used here are country, year_week, source, variant and
// number_detections_variant. Files may be gzip-compressed.

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "casecast/core.hpp"
#include "casecast/errors.hpp"
#include "casecast/weeks.hpp"

namespace casecast {

enum class DataSource { Gisaid, Tessy };

inline const char* source_name(DataSource s) {
  return s == DataSource::Gisaid ? "GISAID" : "TESSy";
}

struct CaseRecord {
  std::string country;
  std::string year_week;  // "YYYY-WW", validated
  DataSource source = DataSource::Gisaid;
  std::string variant;
  long long detections = 0;  // >= 0
};

struct VariantPanel {
  std::string variant;
  std::vector<std::string> countries;  // lexicographic
  std::vector<std::string> weeks;      // densified, ascending, no gaps
  Matrix values;                       // weeks x countries
};

namespace detail {

struct CsvRow {
  std::vector<std::string> fields;
  long line = 0;  // 1-based line the row starts on
};

// Minimal RFC 4180 reader: quoted fields, doubled quotes, newlines inside
// quotes, CRLF or LF endings.
inline std::vector<CsvRow> read_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  row.line = 1;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  long line = 1;

  auto end_field = [&]() {
    row.fields.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(std::move(row));
    row = CsvRow{};
    row.line = line;
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '\n') ++line;
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty() || !row.fields.empty()) {
          end_row();
          row.line = line;
        } else {
          row.line = line;  // skip blank line
        }
        break;
      default:
        field += ch;
        row_has_content = true;
        break;
    }
  }
  if (in_quotes) throw FormatError("unterminated quoted field", line);
  if (row_has_content || !field.empty() || !row.fields.empty()) end_row();
  return rows;
}

inline long long parse_count(const std::string& s, long line) {
  if (s.empty()) throw FormatError("empty detection count", line);
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw FormatError("unparseable detection count '" + s + "'", line);
  }
  if (pos != s.size()) throw FormatError("unparseable detection count '" + s + "'", line);
  if (v < 0) throw FormatError("negative detection count '" + s + "'", line);
  return v;
}

inline DataSource parse_source(const std::string& s, long line) {
  if (s == "GISAID") return DataSource::Gisaid;
  if (s == "TESSy") return DataSource::Tessy;
  throw FormatError("unknown data source '" + s + "' (expected GISAID or TESSy)", line);
}

}  // namespace detail

// Reads a whole file; transparently inflates gzip (by magic bytes).
inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string raw = ss.str();
  if (raw.size() >= 2 && static_cast<unsigned char>(raw[0]) == 0x1f &&
      static_cast<unsigned char>(raw[1]) == 0x8b) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw IoError("cannot gzopen " + path);
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(gz);
    if (bad) throw IoError("gzip read error in " + path);
    return out;
  }
  return raw;
}

// Checksum of the file exactly as stored (before any decompression).
inline std::uint64_t file_checksum_fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

inline std::vector<CaseRecord> parse_csv(const std::string& text) {
  auto rows = detail::read_csv(text);
  if (rows.empty()) throw FormatError("missing header row");

  const auto& header = rows.front().fields;
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_country = column("country");
  const std::size_t c_week = column("year_week");
  const std::size_t c_source = column("source");
  const std::size_t c_variant = column("variant");
  const std::size_t c_count = column("number_detections_variant");

  std::vector<CaseRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() < header.size()) {
      throw FormatError("row has " + std::to_string(row.fields.size()) + " fields, header has " +
                            std::to_string(header.size()),
                        row.line);
    }
    CaseRecord rec;
    rec.country = row.fields[c_country];
    rec.year_week = row.fields[c_week];
    parse_year_week(rec.year_week, row.line);  // validates
    rec.source = detail::parse_source(row.fields[c_source], row.line);
    rec.variant = row.fields[c_variant];
    rec.detections = detail::parse_count(row.fields[c_count], row.line);
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<CaseRecord> parse_csv_file(const std::string& path) {
  return parse_csv(read_file_bytes(path));
}

inline std::vector<CaseRecord> filter_source(const std::vector<CaseRecord>& records,
                                             DataSource keep) {
  std::vector<CaseRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    if (r.source == keep) out.push_back(r);
  return out;
}

// One panel per distinct variant. The week axis is densified over the full
// observed range of the input and shared by all panels, as is the country
// axis (lexicographic), so every panel has the same shape. Missing cells are
// zero; duplicate cells are summed.
inline std::map<std::string, VariantPanel> build_panels(const std::vector<CaseRecord>& records) {
  if (records.empty()) throw DataError("build_panels: no records");

  YearWeek lo = parse_year_week(records.front().year_week);
  YearWeek hi = lo;
  std::set<std::string> country_set, variant_set;
  for (const auto& r : records) {
    const YearWeek yw = parse_year_week(r.year_week);
    lo = std::min(lo, yw);
    hi = std::max(hi, yw);
    country_set.insert(r.country);
    variant_set.insert(r.variant);
  }

  std::vector<std::string> weeks;
  std::map<std::string, std::size_t> week_index;
  for (YearWeek yw = lo;; yw = next_week(yw)) {
    week_index[format_year_week(yw)] = weeks.size();
    weeks.push_back(format_year_week(yw));
    if (yw == hi) break;
  }
  std::vector<std::string> countries(country_set.begin(), country_set.end());
  std::map<std::string, std::size_t> country_index;
  for (std::size_t i = 0; i < countries.size(); ++i) country_index[countries[i]] = i;

  std::map<std::string, VariantPanel> panels;
  for (const auto& v : variant_set) {
    VariantPanel p;
    p.variant = v;
    p.countries = countries;
    p.weeks = weeks;
    p.values = Matrix(weeks.size(), countries.size());
    panels.emplace(v, std::move(p));
  }
  for (const auto& r : records) {
    VariantPanel& p = panels.at(r.variant);
    p.values(week_index.at(r.year_week), country_index.at(r.country)) +=
        static_cast<double>(r.detections);
  }
  return panels;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Emits every cell (zeros included) so that re-ingesting reproduces the panel
// exactly, densified range and all.
inline std::string panel_to_csv(const VariantPanel& p) {
  std::string out = "country,year_week,source,variant,number_detections_variant\n";
  for (std::size_t w = 0; w < p.weeks.size(); ++w) {
    for (std::size_t c = 0; c < p.countries.size(); ++c) {
      char count[32];
      std::snprintf(count, sizeof(count), "%lld",
                    static_cast<long long>(p.values(w, c)));
      out += detail::csv_escape(p.countries[c]) + "," + p.weeks[w] + ",GISAID," +
             detail::csv_escape(p.variant) + "," + count + "\n";
    }
  }
  return out;
}

}  // namespace casecast
