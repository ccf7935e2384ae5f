#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace cqed {

/// Flat key/value store read from an INI-style text file.
///
/// Lines are `key = value`; `[section]` headers prefix subsequent keys as
/// `section.key`. Keys in a `[model]` section, or before any section, are also
/// reachable by their bare name. `#` and `;` start comments.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Canonical `key = value` listing, sorted by key.
  std::string canonical_text() const;
  /// FNV-1a over the canonical text.
  std::uint64_t hash() const;

 private:
  std::string canonical_key(const std::string& key) const;
  std::map<std::string, std::string> entries_;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace cqed
