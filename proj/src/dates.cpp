#include "dementia_r1/dates.hpp"

#include <charconv>
#include <cstdio>

namespace dr1 {

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

namespace {

bool parse_fixed(std::string_view text, int& out) {
  for (char c : text)
    if (c < '0' || c > '9') return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!parse_fixed(text.substr(0, 4), y) || !parse_fixed(text.substr(5, 2), m) ||
      !parse_fixed(text.substr(8, 2), d))
    return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

double months_between(const Date& from, const Date& to) {
  const int years = static_cast<int>(to.year()) - static_cast<int>(from.year());
  const int months = static_cast<int>(static_cast<unsigned>(to.month())) -
                     static_cast<int>(static_cast<unsigned>(from.month()));
  const int days = static_cast<int>(static_cast<unsigned>(to.day())) -
                   static_cast<int>(static_cast<unsigned>(from.day()));
  return 12.0 * years + months + days / 30.0;
}

Date add_months(const Date& date, int months) {
  Date shifted = date + std::chrono::months{months};
  if (!shifted.ok()) shifted = shifted.year() / shifted.month() / std::chrono::last;
  return shifted;
}

}  // namespace dr1
