#include "modelab/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "modelab/config.hpp"
#include "modelab/errors.hpp"

namespace modelab {

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha1(), nullptr) != 1) {
    throw IoError("sha1 digest failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string git_blob_hash(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob);
}

void RunManifest::write(const std::string& dir, const std::string& config_text) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir + "/config.txt");
    if (!os) throw IoError("cannot write " + dir + "/config.txt");
    os << config_text;
  }
  std::ofstream os(dir + "/manifest.txt");
  if (!os) throw IoError("cannot write " + dir + "/manifest.txt");
  os << "command = " << command << '\n';
  os << "config = config.txt\n";
  os << "config_hash = " << config_hash << '\n';
  std::string seed_list;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seed_list += (i ? "," : "") + std::to_string(seeds[i]);
  }
  os << "seeds = " << seed_list << '\n';
  for (const auto& [name, path] : outputs) os << "output." << name << " = " << path << '\n';
  if (!os) throw IoError("write failed for " + dir + "/manifest.txt");
}

RunManifest RunManifest::read(const std::string& dir) {
  const KvConfig kv = KvConfig::parse_file(dir + "/manifest.txt");
  RunManifest manifest;
  manifest.command = kv.get_string("command", "");
  manifest.config_hash = kv.get_string("config_hash", "");
  for (const real seed : kv.get_reals("seeds", {})) {
    manifest.seeds.push_back(static_cast<std::uint64_t>(seed));
  }
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("output.", 0) == 0) manifest.outputs[key.substr(7)] = value;
  }
  return manifest;
}

bool RunManifest::exists(const std::string& dir) {
  return std::filesystem::exists(dir + "/manifest.txt");
}

RunManifest write_run_manifest(const std::string& dir, const std::string& command,
                               const std::string& config_text,
                               const std::vector<std::uint64_t>& seeds,
                               const std::map<std::string, std::string>& outputs) {
  RunManifest manifest;
  manifest.command = command;
  manifest.config_hash = git_blob_hash(config_text);
  manifest.seeds = seeds;
  manifest.outputs = outputs;
  manifest.write(dir, config_text);
  return manifest;
}

}  // namespace modelab
