#pragma once

// Named-tensor container used for model checkpoints.
//
// Layout (all integers little-endian, all floats IEEE-754 binary64
// little-endian):
//
//   offset 0   8 bytes   magic "CITEFLO1"
//   offset 8   u64       tensor count n
//   then n table entries, packed:
//       u32   name byte length L
//       L     name bytes (UTF-8)
//       u32   rows
//       u32   cols
//       u64   payload offset from the start of the file
//   then the payloads in table order: rows*cols doubles, row-major.
//
// The byte order is fixed by the format, not the host, so files round-trip
// bit-exactly across platforms.

#include <string>
#include <vector>

#include "citeflow/tensor.hpp"

namespace citeflow {

struct NamedTensor {
  std::string name;
  Matrix value;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// nullptr when absent.
const Matrix* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace citeflow
