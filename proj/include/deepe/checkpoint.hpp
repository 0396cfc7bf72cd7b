#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "deepe/config.hpp"
#include "deepe/model.hpp"

namespace deepe {

// The file is missing pieces, fails its checksum, or does not describe a
// model this build can reconstruct.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout, all integers and floats little-endian:
//   magic          8 bytes  "DEEPECKP"
//   format_version u32      kCheckpointVersion
//   scalar_bytes   u32      4 (float32) or 8 (float64)
//   entity_hash    u64      Vocabulary::fingerprint() of the entity vocab
//   relation_hash  u64      same for the relation vocab
//   num_entities   u64
//   num_relations  u64      original relations; tables hold 2x rows
//   config_len     u32, then config_len bytes of key=value text
//   tensor_count   u32
//   per tensor:    u32 name_len, name bytes, u32 kind (0 parameter,
//                  1 buffer), u64 rows, u64 cols, rows*cols scalars row-major
//   checksum       u64      FNV-1a 64 over every preceding byte
// Tensor names are those of Model::parameters() and Model::buffers().
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint32_t scalar_bytes = 4;
  std::uint64_t entity_hash = 0;
  std::uint64_t relation_hash = 0;
  std::uint64_t num_entities = 0;
  std::uint64_t num_relations = 0;
  RunConfig config;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model,
                     const RunConfig& config, std::uint64_t entity_hash,
                     std::uint64_t relation_hash);

// Values stored at the other precision are converted on load.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path,
                         CheckpointInfo* info = nullptr);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace deepe
