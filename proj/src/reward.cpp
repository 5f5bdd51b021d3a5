#include "dementia_r1/reward.hpp"

#include <cmath>
#include <istream>

#include "dementia_r1/errors.hpp"
#include "dementia_r1/text.hpp"

namespace dr1 {

int r_cold(double predicted, double truth, double delta) {
  return std::abs(predicted - truth) <= delta ? 1 : 0;
}

int r_task(int predicted_label, int true_label) { return predicted_label == true_label ? 1 : 0; }

ToleranceProfile ToleranceProfile::amc() {
  ToleranceProfile p;
  p.set("MMSE", {0, 30, 2});
  p.set("GDS", {1, 7, 0});
  p.set("CDR", {0, 3, 0});
  return p;
}

ToleranceProfile ToleranceProfile::adni() {
  ToleranceProfile p;
  p.set("MMSE", {0, 30, 2});
  p.set("CDRSB", {0, 18, 1.0});
  p.set("ADAS11", {0, 70, 5});
  p.set("ADAS13", {0, 85, 6});
  p.set("ADASQ4", {0, 10, 1});
  p.set("RAVLT_learning", {-20, 20, 3});
  p.set("LDELTOTAL", {0, 25, 2});
  return p;
}

ToleranceProfile ToleranceProfile::for_profile(Profile profile) {
  return profile == Profile::Amc ? amc() : adni();
}

void ToleranceProfile::set(const std::string& index_name, ToleranceEntry entry) {
  if (!(entry.delta >= 0.0)) throw ConfigError("tolerance delta must be >= 0 for " + index_name);
  if (!(entry.range_lo < entry.range_hi))
    throw ConfigError("tolerance range must satisfy lo < hi for " + index_name);
  entries_[index_name] = entry;
}

const ToleranceEntry& ToleranceProfile::entry(std::string_view index_name) const {
  const auto it = entries_.find(index_name);
  if (it == entries_.end())
    throw LookupError("no tolerance registered for " + std::string{index_name});
  return it->second;
}

bool ToleranceProfile::contains(std::string_view index_name) const {
  return entries_.find(index_name) != entries_.end();
}

ToleranceProfile ToleranceProfile::load(std::istream& in) {
  ToleranceProfile profile;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    auto fail = [&] {
      return ParseError("tolerance line " + std::to_string(line_no) +
                        ": expected `NAME = lo, hi, delta`");
    };
    if (eq == std::string_view::npos) throw fail();
    const auto name = trim(text.substr(0, eq));
    const auto fields = split(text.substr(eq + 1), ',');
    if (name.empty() || fields.size() != 3) throw fail();
    const auto lo = parse_number(fields[0]);
    const auto hi = parse_number(fields[1]);
    const auto delta = parse_number(fields[2]);
    if (!lo || !hi || !delta) throw fail();
    profile.set(std::string{name}, {*lo, *hi, *delta});
  }
  return profile;
}

double tolerance_for(std::string_view index_name, const ToleranceProfile& profile) {
  return profile.entry(index_name).delta;
}

std::optional<ParsedAnswer> parse_boxed_answer(std::string_view completion) {
  constexpr std::string_view open_tag = "<answer>";
  constexpr std::string_view close_tag = "</answer>";
  constexpr std::string_view box = "\\boxed{";
  const auto start = completion.find(open_tag);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body_begin = start + open_tag.size();
  const auto end = completion.find(close_tag, body_begin);
  if (end == std::string_view::npos) return std::nullopt;
  const auto body = completion.substr(body_begin, end - body_begin);

  const auto box_pos = body.find(box);
  if (box_pos == std::string_view::npos) return std::nullopt;
  const auto content_begin = box_pos + box.size();
  const auto close = body.find('}', content_begin);
  if (close == std::string_view::npos) return std::nullopt;
  const auto value = parse_number(body.substr(content_begin, close - content_begin));
  if (!value) return std::nullopt;
  return ParsedAnswer{*value, std::string{body.substr(box_pos, close + 1 - box_pos)}};
}

std::string format_completion(double value) {
  return "<answer>\\boxed{" + format_number(value) + "}</answer>";
}

}  // namespace dr1
