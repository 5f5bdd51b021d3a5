#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace dr1 {

using Date = std::chrono::year_month_day;

std::string format_date(const Date& date);

// Strict YYYY-MM-DD; returns nullopt for anything else or invalid days.
std::optional<Date> parse_date(std::string_view text);

// Calendar-month distance from `from` to `to`: whole months plus the
// day-of-month difference over 30. Visits generated on a fixed day of the
// month are therefore an exact integer number of months apart.
double months_between(const Date& from, const Date& to);

Date add_months(const Date& date, int months);

}  // namespace dr1
