#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnd/nn.hpp"

namespace tnd {

/// On-disk container shared by model and dataset files:
///
///   bytes 0..3   magic "TSCP"
///   u32 LE       format version
///   u64 LE       header length L
///   L bytes      UTF-8 JSON header; header["blocks"] lists {name, shape} per payload block
///   payload      each block as raw little-endian f64, in header order
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<std::vector<double>> blocks;
};

/// Atomic: writes a temporary sibling and renames it over `path`.
void write_container(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<std::pair<std::string, const Tensor*>>& blocks);
/// Throws FormatError (magic/header), VersionError (newer version), TruncatedError (short payload).
Container read_container(const std::filesystem::path& path);

/// Writes `text` atomically.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_model(const std::filesystem::path& path);

nlohmann::json provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);
nlohmann::json layer_spec_to_json(const LayerSpec& s);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

/// FNV-1a 64-bit over raw bytes, as 16 hex digits.
std::string fnv1a_hex(std::span<const unsigned char> bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace tnd
