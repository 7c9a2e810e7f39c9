#pragma once

#include <string>

namespace sird {

// Calendar days are stored as days since 1970-01-01 (may be negative).
using EpochDay = long;

// Proleptic Gregorian day count (Hinnant's civil-days algorithm).
EpochDay days_from_civil(int year, unsigned month, unsigned day);
void civil_from_days(EpochDay z, int& year, unsigned& month, unsigned& day);

// ISO-8601 "YYYY-MM-DD". parse_date throws DataError on malformed input.
EpochDay parse_date(const std::string& iso);
std::string format_date(EpochDay day);

// 0 = Monday ... 6 = Sunday.
int weekday(EpochDay day);

}  // namespace sird
