#ifndef MODELAB_CONFIG_HPP
#define MODELAB_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

#include "modelab/training.hpp"

namespace modelab {

/** Flat `key = value` configuration with `#` comments and dotted section
 * keys. The grammar is deliberately trivial so any script can write it.
 */
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  real get_real(const std::string& key, real fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<real> get_reals(const std::string& key, const std::vector<real>& fallback) const;
  std::vector<Index> get_dims(const std::string& key, const std::vector<Index>& fallback) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Sorted `key = value` lines; the canonical snapshot that gets hashed.
  std::string canonical_text() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::string origin_ = "<empty>";

  [[noreturn]] void fail(const std::string& key, const std::string& why) const;
};

/// ConfigError on out-of-range or unparsable values.
ExperimentConfig experiment_config_from(const KvConfig& kv);

/// Full snapshot, defaults included; parsing it back reproduces the config.
std::string experiment_config_text(const ExperimentConfig& config);

}  // namespace modelab

#endif
