#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "voxmem/tensor.hpp"

namespace voxmem::ad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// "VMWT" parameter checkpoint: magic, version u32, count u32, then per
// tensor: name length u32 + UTF-8 name, rank u32, dims u32[], data f64[]
// little-endian.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& items);

// Loads into the given tensors in place; the file must contain exactly the
// same names with exactly the same shapes.
void load_checkpoint(const std::filesystem::path& path, std::vector<NamedTensor>& items);

}  // namespace voxmem::ad
