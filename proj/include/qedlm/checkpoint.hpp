#pragma once
// Binary checkpoint layout (all integers little-endian):
//
//   "QEDF"                      magic
//   u8   version                kCheckpointVersion
//   u8   kind                   1 diffusion, 2 teacher LM, 3 classifier
//   u32  k, then k x i64        integer config block
//   u32  m, then m x (str, str) metadata pairs
//   u32  p, then p x (str name, u64 count, count x f64)
//
// where str = u32 byte length + bytes. Writes go to "<path>.tmp" and are
// renamed into place.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qedlm/nn.hpp"

namespace qedlm {

inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint8_t { diffusion = 1, teacher = 2, classifier = 3 };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::diffusion;
  std::vector<std::int64_t> config;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::pair<std::string, std::vector<double>>> params;

  std::string meta(const std::string& key) const;  // throws FormatError if absent
  std::string meta_or(const std::string& key, const std::string& fallback) const;
  void set_meta(const std::string& key, const std::string& value);
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Writes bytes to path through a temp file and rename.
void write_file_atomic(const std::string& path, const std::string& bytes);

// Copies named values into the matching tensors; every parameter must be
// present with the right size.
void store_params(const ParamList& params, Checkpoint& ckpt);
void load_params(const Checkpoint& ckpt, const ParamList& params);

// Round-trip exact text form of a double.
std::string format_real(double v);
double parse_real(const std::string& s, const std::string& what);

}  // namespace qedlm
