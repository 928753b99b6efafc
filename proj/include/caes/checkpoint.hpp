#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caes/errors.hpp"

namespace caes {

// Checkpoint file layout: one JSON manifest line (kind, version, dims,
// payload float count, SHA-256 of the payload) followed by the raw
// little-endian float32 parameter arrays in declaration order.
struct Checkpoint {
  nlohmann::json manifest;
  std::vector<float> payload;
};

std::string sha256_hex(const void* data, std::size_t bytes);

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     int version, const nlohmann::json& meta,
                     const std::vector<float>& payload);

// Verifies kind, version (ChecksumMismatch / VersionUnsupported on failure)
// and the payload digest.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& kind,
                           int supported_version);

// The manifest's payload digest, used as the model checksum in run reports.
std::string checkpoint_checksum(const std::filesystem::path& path);

}  // namespace caes
