#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scfnet/config.hpp"
#include "scfnet/model.hpp"

namespace scfnet {

enum class Precision : std::uint8_t { F32 = 4, F64 = 8 };

template <typename T>
constexpr Precision precision_of() {
  return sizeof(T) == 4 ? Precision::F32 : Precision::F64;
}

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;  // exact for either precision
  bool operator==(const StoredTensor&) const = default;
};

/// Training snapshot.
///
/// File layout, little-endian:
///   "SCFNETCK"                magic, 8 bytes
///   u32 version               kCheckpointVersion
///   u8  value width           4 (float32) or 8 (float64)
///   str model config, str train config   (u32 length + bytes, config text)
///   u32 epoch, u64 step       completed epochs, completed optimizer steps
///   3 sections                parameters, buffers, momentum; each
///                             u32 count, then per tensor:
///                             str name, u32 rank, u64 dims[rank], values
///   "END."                    trailer
/// Tensors are matched by name on restore, so their order in the file is
/// irrelevant.
struct Checkpoint {
  Precision precision = Precision::F32;
  ModelConfig model;
  TrainConfig train;
  std::uint32_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<StoredTensor> params, buffers, momentum;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename T>
std::vector<StoredTensor> store_tensors(const std::vector<NamedTensor<T>>& tensors);

// Copies each named value into `targets`; every target must be present with
// a matching shape, and the file may not carry names the targets lack.
template <typename T>
void restore_tensors(const std::vector<StoredTensor>& stored, const std::vector<NamedTensor<T>>& targets,
                     const std::string& section);

}  // namespace scfnet
