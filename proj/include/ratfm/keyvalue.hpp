#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace ratfm {

/// Ordered key=value text used for manifests, configs and reports. Blank lines and lines
/// starting with '#' are ignored when parsing.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set(const std::string& key, const char* value) { entries_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value) { entries_[key] = std::to_string(value); }
  void set(const std::string& key, unsigned long long value) { entries_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { entries_[key] = std::to_string(value); }
  void set(const std::string& key, std::size_t value) { entries_[key] = std::to_string(value); }
  void set(const std::string& key, bool value) { entries_[key] = value ? "1" : "0"; }

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string serialize() const;
  static KeyValues parse(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static KeyValues read(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace ratfm
