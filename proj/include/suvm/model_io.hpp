#pragma once

#include "suvm/config.hpp"
#include "suvm/dictionary.hpp"
#include "suvm/generative.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace suvm {

/// Binary container, little-endian throughout:
///
///   "SUVM"  u32 version  u32 section count
///   per section: 4-byte tag, u64 payload length, payload, u32 CRC-32 of payload
///   u32 CRC-32 of everything before it
///
/// Sections: CONF (run configuration as JSON text), DICT (visual dictionary),
/// then one MODL per category model.
struct ModelFile {
  static constexpr std::uint32_t kVersion = 1;

  RunConfig config;
  dict::VisualDictionary dictionary;
  std::vector<gen::SuvModel> models;
};

std::vector<unsigned char> serialize(const ModelFile& file);
/// Throws Format on a bad magic, checksum or payload and on a version mismatch.
ModelFile deserialize(const std::vector<unsigned char>& bytes);

void save_model_file(const ModelFile& file, const std::string& path);
ModelFile load_model_file(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t size);
/// The trailing whole-file checksum of a serialized container.
std::uint32_t file_checksum(const std::vector<unsigned char>& bytes);

/// Human-readable export; matrices become nested arrays.
nlohmann::json to_json(const ModelFile& file, bool include_patches = false);

}  // namespace suvm
