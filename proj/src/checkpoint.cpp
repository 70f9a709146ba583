#include "voxmem/checkpoint.hpp"

#include <map>

#include "voxmem/binio.hpp"

namespace voxmem::ad {

namespace {
constexpr std::uint32_t kVersion = 1;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& items) {
  BinaryWriter out(path);
  out.magic("VMWT");
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(items.size()));
  for (const NamedTensor& item : items) {
    out.u32(static_cast<std::uint32_t>(item.name.size()));
    out.text(item.name);
    const Shape& shape = item.tensor.shape();
    out.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) out.u32(static_cast<std::uint32_t>(d));
    for (double v : item.tensor.values()) out.f64(v);
  }
  out.close();
}

void load_checkpoint(const std::filesystem::path& path, std::vector<NamedTensor>& items) {
  BinaryReader in(path);
  in.expect_magic("VMWT");
  const std::uint32_t version = in.u32();
  if (version != kVersion) in.fail("unsupported version " + std::to_string(version));
  const std::uint32_t count = in.u32();

  std::map<std::string, std::pair<Shape, std::vector<double>>> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = in.u32();
    std::string name = in.string(name_len);
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = in.u32();
    const std::size_t n = shape_size(shape);
    std::vector<double> data(n);
    for (std::size_t j = 0; j < n; ++j) data[j] = in.f64();
    if (!loaded.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data))).second)
      in.fail("duplicate tensor name");
  }
  in.expect_end();

  if (loaded.size() != items.size())
    throw ContractError("checkpoint: expected " + std::to_string(items.size()) +
                        " tensors, file has " + std::to_string(loaded.size()));
  for (NamedTensor& item : items) {
    auto it = loaded.find(item.name);
    if (it == loaded.end())
      throw ContractError("checkpoint: missing tensor '" + item.name + "'");
    if (it->second.first != item.tensor.shape())
      throw ContractError("checkpoint: tensor '" + item.name + "' has shape " +
                          shape_str(it->second.first) + ", expected " +
                          shape_str(item.tensor.shape()));
    auto dst = item.tensor.mutable_values();
    std::copy(it->second.second.begin(), it->second.second.end(), dst.begin());
  }
}

}  // namespace voxmem::ad
