#include "dementia_r1/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <istream>

#include "dementia_r1/errors.hpp"
#include "dementia_r1/random.hpp"
#include "dementia_r1/text.hpp"

namespace dr1 {

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || trim(text.substr(0, eq)).empty())
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    config.set(std::string{trim(text.substr(0, eq))}, std::string{trim(text.substr(eq + 1))});
  }
  return config;
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
}

bool KeyValueConfig::contains(std::string_view key) const {
  return values_.find(key) != values_.end();
}

std::optional<std::string> KeyValueConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::string_view text = trim(*v);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(std::string{key} + ": expected a number, got '" + *v + "'");
  return out;
}

std::uint64_t KeyValueConfig::get_u64(std::string_view key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::string_view text = trim(*v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(std::string{key} + ": expected a non-negative integer, got '" + *v + "'");
  return out;
}

std::int64_t KeyValueConfig::get_i64(std::string_view key, std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::string_view text = trim(*v);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(std::string{key} + ": expected an integer, got '" + *v + "'");
  return out;
}

std::vector<std::string> KeyValueConfig::get_list(std::string_view key,
                                                  std::vector<std::string> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (auto part : split(*v, ','))
    if (auto item = trim(part); !item.empty()) out.emplace_back(item);
  return out;
}

KeyValueConfig& KeyValueConfig::merge(const KeyValueConfig& higher) {
  for (const auto& [k, v] : higher.values_) values_[k] = v;
  return *this;
}

void KeyValueConfig::require_known(std::span<const std::string> known) const {
  for (const auto& [k, v] : values_)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown configuration key '" + k + "'");
}

std::string KeyValueConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t KeyValueConfig::hash() const { return fnv1a(echo()); }

std::string env_name(std::string_view key) {
  std::string name = "DR1_";
  for (char c : key)
    name += (c == '.' || c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

KeyValueConfig env_overrides(std::span<const std::string> keys) {
  KeyValueConfig config;
  for (const auto& key : keys)
    if (const char* value = std::getenv(env_name(key).c_str())) config.set(key, value);
  return config;
}

}  // namespace dr1
