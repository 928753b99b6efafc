#include "caes/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

namespace caes {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const void* data, std::size_t bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, bytes, digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 computation failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void save_checkpoint(const fs::path& path, const std::string& kind, int version,
                     const json& meta, const std::vector<float>& payload) {
  json manifest = meta;
  manifest["kind"] = kind;
  manifest["version"] = version;
  manifest["payload_floats"] = payload.size();
  manifest["sha256"] = sha256_hex(payload.data(), payload.size() * sizeof(float));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.dump() << '\n';
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + path.string());
}

namespace {

json read_manifest(std::ifstream& in, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("cannot read manifest from " + path.string());
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw IoError("bad manifest in " + path.string() + ": " + e.what());
  }
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& path, const std::string& kind,
                           int supported_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Checkpoint ckpt;
  ckpt.manifest = read_manifest(in, path);

  if (ckpt.manifest.value("kind", "") != kind)
    throw Error(path.string() + ": expected kind '" + kind + "'");
  const int version = ckpt.manifest.value("version", -1);
  if (version != supported_version)
    throw VersionUnsupportedError(path.string() + ": version " + std::to_string(version) +
                                  " not supported");

  const std::size_t n = ckpt.manifest.at("payload_floats").get<std::size_t>();
  ckpt.payload.resize(n);
  in.read(reinterpret_cast<char*>(ckpt.payload.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
    throw ChecksumMismatchError(path.string() + ": truncated payload");

  const std::string expect = ckpt.manifest.at("sha256").get<std::string>();
  const std::string actual = sha256_hex(ckpt.payload.data(), n * sizeof(float));
  if (expect != actual)
    throw ChecksumMismatchError(path.string() + ": payload digest mismatch");
  return ckpt;
}

std::string checkpoint_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_manifest(in, path).at("sha256").get<std::string>();
}

}  // namespace caes
