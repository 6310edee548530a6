#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bnnr/tensor.hpp"

namespace bnnr {

// Binary tensor archive shared by model checkpoints and adversarial batches.
//
//   offset  field
//   0       magic "BNNRARCH" (8 bytes)
//   8       u32 format version (kArchiveVersion)
//   12      u32 payload kind (ArchiveKind)
//   16      u64 metadata length L, then L bytes of UTF-8 metadata (JSON text)
//   ...     u64 entry count E, then E entries:
//             u32 name length, name bytes,
//             u32 rank R, R x u64 dims,
//             prod(dims) x f64 values
//
// All integers and reals are little-endian; reals are IEEE-754 binary64.
inline constexpr char kArchiveMagic[8] = {'B', 'N', 'N', 'R', 'A', 'R', 'C', 'H'};
inline constexpr std::uint32_t kArchiveVersion = 1;

enum class ArchiveKind : std::uint32_t { model_checkpoint = 1, tensor_batch = 2 };

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArchiveEntry {
  std::string name;
  Tensor tensor;
};

struct Archive {
  ArchiveKind kind = ArchiveKind::tensor_batch;
  std::string metadata;
  std::vector<ArchiveEntry> entries;

  const Tensor& at(const std::string& name) const;
};

std::vector<std::uint8_t> encode_archive(const Archive& archive);
Archive decode_archive(const std::vector<std::uint8_t>& bytes);

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

}  // namespace bnnr
