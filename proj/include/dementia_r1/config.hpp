#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dr1 {

// Flat `section.key = value` configuration. Later layers override earlier
// ones; the resolved map echoes as sorted lines.
class KeyValueConfig {
 public:
  // '#' starts a comment; blank lines are ignored. Throws ParseError.
  static KeyValueConfig parse(std::istream& in);

  void set(const std::string& key, std::string value);
  bool contains(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;

  // Typed getters throw ConfigError when the stored text does not convert.
  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  std::int64_t get_i64(std::string_view key, std::int64_t fallback) const;
  std::vector<std::string> get_list(std::string_view key, std::vector<std::string> fallback) const;

  // Entries of `higher` replace ours.
  KeyValueConfig& merge(const KeyValueConfig& higher);

  // Throws ConfigError naming the first key not in `known`.
  void require_known(std::span<const std::string> known) const;

  std::string echo() const;
  std::uint64_t hash() const;
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// "stage1.lr" -> "DR1_STAGE1_LR".
std::string env_name(std::string_view key);

// Values of DR1_* variables for the given keys.
KeyValueConfig env_overrides(std::span<const std::string> keys);

}  // namespace dr1
