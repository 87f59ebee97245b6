#ifndef MODELAB_MANIFEST_HPP
#define MODELAB_MANIFEST_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace modelab {

std::string sha1_hex(const std::string& bytes);

/// SHA-1 of "blob <len>\0<content>", the way git hashes file contents.
std::string git_blob_hash(const std::string& content);

/** What it takes to reproduce an output directory: the exact config
 * snapshot (stored next to the manifest), its content hash, the command,
 * the seeds, and the produced files.
 */
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> outputs;  // logical name -> relative path

  /// Writes <dir>/manifest.txt and <dir>/config.txt.
  void write(const std::string& dir, const std::string& config_text) const;
  static RunManifest read(const std::string& dir);
  static bool exists(const std::string& dir);
};

/// Builds the manifest for a finished run and writes it.
RunManifest write_run_manifest(const std::string& dir, const std::string& command,
                               const std::string& config_text,
                               const std::vector<std::uint64_t>& seeds,
                               const std::map<std::string, std::string>& outputs);

}  // namespace modelab

#endif
