#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace sde_elbo {

// Flat key-value document with [section] headers; keys address as
// "section.key". Parsed configs reject keys outside a command's schema, and
// every run writes its resolved document next to its outputs.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  const std::string& get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, std::int64_t value);

  // throws listing every key not in `allowed`
  void require_known(const std::set<std::string>& allowed) const;

  // sorted, sectioned rendering; input to the config hash
  std::string canonical_text() const;
  std::string hash() const;

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace sde_elbo
