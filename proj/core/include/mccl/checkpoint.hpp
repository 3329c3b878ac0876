#pragma once

#include <map>
#include <string>

#include "mccl/tensor.hpp"

namespace mccl {

// Checkpoint format: magic "MCCL", format version u32, tensor count u32,
// then per tensor: name length u32, name bytes, rank u32, dims u32 each,
// payload as 32-bit little-endian floats. All integers little-endian.

void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor32>& tensors);

std::map<std::string, Tensor32> load_checkpoint(const std::string& path);

}  // namespace mccl
