#pragma once

// "YYYY-WW" week labels and the ISO-week calendar arithmetic needed to
// densify weekly panels across year boundaries.

#include <cstdio>
#include <string>

#include "casecast/errors.hpp"

namespace casecast {

struct YearWeek {
  int year = 0;
  int week = 0;  // 1-based

  auto operator<=>(const YearWeek&) const = default;
};

namespace detail {

// Days since 1970-01-01 (Howard Hinnant's civil-days algorithm).
inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                       static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

// 0 = Sunday .. 6 = Saturday
inline int weekday(int y, int m, int d) {
  long days = days_from_civil(y, m, d);
  return static_cast<int>(((days % 7) + 11) % 7);
}

}  // namespace detail

// An ISO year has 53 weeks when it starts on a Thursday, or on a Wednesday in
// a leap year; otherwise 52.
inline int iso_weeks_in_year(int year) {
  const int jan1 = detail::weekday(year, 1, 1);
  const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  if (jan1 == 4) return 53;          // Thursday
  if (leap && jan1 == 3) return 53;  // Wednesday
  return 52;
}

inline YearWeek parse_year_week(const std::string& label, long line = -1) {
  if (label.size() != 7 || label[4] != '-') {
    throw FormatError("bad year_week '" + label + "', expected YYYY-WW", line);
  }
  for (int i : {0, 1, 2, 3, 5, 6}) {
    if (label[i] < '0' || label[i] > '9')
      throw FormatError("bad year_week '" + label + "', expected YYYY-WW", line);
  }
  YearWeek yw;
  yw.year = std::stoi(label.substr(0, 4));
  yw.week = std::stoi(label.substr(5, 2));
  if (yw.week < 1 || yw.week > iso_weeks_in_year(yw.year)) {
    throw FormatError("year_week '" + label + "' outside 01.." +
                          std::to_string(iso_weeks_in_year(yw.year)) + " for that year",
                      line);
  }
  return yw;
}

inline std::string format_year_week(const YearWeek& yw) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", yw.year, yw.week);
  return buf;
}

inline YearWeek next_week(YearWeek yw) {
  if (yw.week < iso_weeks_in_year(yw.year)) {
    ++yw.week;
  } else {
    ++yw.year;
    yw.week = 1;
  }
  return yw;
}

// Number of weeks from `from` to `to` inclusive of both ends; 0 if to < from.
inline long week_span(const YearWeek& from, const YearWeek& to) {
  if (to < from) return 0;
  long n = 0;
  for (int y = from.year; y < to.year; ++y) n += iso_weeks_in_year(y);
  return n + to.week - from.week + 1;
}

}  // namespace casecast
