#include "voxmem/voxel.hpp"

#include <cmath>

#include "voxmem/binio.hpp"

namespace voxmem {

namespace {

constexpr std::uint32_t kVoxVersion = 1;

void check_resolution_match(const VoxelGrid& a, const VoxelGrid& b, const char* op) {
  if (a.resolution() != b.resolution())
    throw DimensionError(std::string(op) + ": resolution mismatch " +
                         std::to_string(a.resolution()) + " vs " +
                         std::to_string(b.resolution()));
}

void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0))
    throw ConfigError("threshold must lie in (0,1), got " + std::to_string(t));
}

}  // namespace

VoxelGrid::VoxelGrid(std::size_t resolution, double fill) : resolution_(resolution) {
  if (resolution_ == 0) throw DimensionError("voxel grid: zero resolution");
  if (!(fill >= 0.0 && fill <= 1.0))
    throw ContractError("voxel grid: fill value outside [0,1]");
  values_.assign(resolution_ * resolution_ * resolution_, fill);
  binary_ = (fill == 0.0 || fill == 1.0);
}

VoxelGrid VoxelGrid::from_values(std::size_t resolution, std::vector<double> values) {
  VoxelGrid g(resolution);
  if (values.size() != g.voxel_count())
    throw DimensionError("voxel grid: expected " + std::to_string(g.voxel_count()) +
                         " values, got " + std::to_string(values.size()));
  bool binary = true;
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ContractError("voxel grid: value outside [0,1]: " + std::to_string(v));
    binary = binary && (v == 0.0 || v == 1.0);
  }
  g.values_ = std::move(values);
  g.binary_ = binary;
  return g;
}

VoxelGrid VoxelGrid::from_binary(std::size_t resolution, std::vector<double> values) {
  VoxelGrid g = from_values(resolution, std::move(values));
  if (!g.binary_) throw ContractError("voxel grid: non-binary values in binary grid");
  return g;
}

void VoxelGrid::set(std::size_t i, std::size_t j, std::size_t k, double v) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ContractError("voxel grid: value outside [0,1]: " + std::to_string(v));
  values_[index(i, j, k)] = v;
  if (v != 0.0 && v != 1.0) binary_ = false;
}

std::size_t VoxelGrid::occupied_count() const {
  std::size_t n = 0;
  for (double v : values_) n += v > 0.5 ? 1 : 0;
  return n;
}

VoxelGrid binarize(const VoxelGrid& grid, double threshold) {
  check_threshold(threshold);
  std::vector<double> out(grid.voxel_count());
  auto in = grid.values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > threshold ? 1.0 : 0.0;
  return VoxelGrid::from_binary(grid.resolution(), std::move(out));
}

double value_similarity(const VoxelGrid& a, const VoxelGrid& b) {
  check_resolution_match(a, b, "value_similarity");
  auto av = a.values();
  auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  return 1.0 - acc / static_cast<double>(av.size());
}

double iou(const VoxelGrid& predicted, const VoxelGrid& ground_truth, double threshold) {
  check_resolution_match(predicted, ground_truth, "iou");
  if (!ground_truth.is_binary()) throw ContractError("iou: ground truth grid is not binary");
  check_threshold(threshold);
  auto pv = predicted.values();
  auto gv = ground_truth.values();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const bool p = pv[i] > threshold;
    const bool g = gv[i] == 1.0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;  // both empty: agreement on emptiness
  return static_cast<double>(inter) / static_cast<double>(uni);
}

ad::Tensor bce_loss(const ad::Tensor& predicted, const VoxelGrid& ground_truth) {
  if (predicted.size() != ground_truth.voxel_count())
    throw DimensionError("bce_loss: prediction has " + std::to_string(predicted.size()) +
                         " values, ground truth " + std::to_string(ground_truth.voxel_count()));
  if (!ground_truth.is_binary()) throw ContractError("bce_loss: ground truth grid is not binary");

  const std::size_t n = ground_truth.voxel_count();
  auto gv = ground_truth.values();
  std::vector<double> gt(gv.begin(), gv.end());
  std::vector<double> one_minus_gt(n);
  for (std::size_t i = 0; i < n; ++i) one_minus_gt[i] = 1.0 - gt[i];

  ad::Tensor gt_t = ad::Tensor::constant({n}, std::move(gt));
  ad::Tensor gt_inv = ad::Tensor::constant({n}, std::move(one_minus_gt));

  ad::Tensor p = ad::clamp(predicted, kBceEpsilon, 1.0 - kBceEpsilon);
  ad::Tensor term = ad::add(ad::mul(gt_t, ad::log(p)),
                            ad::mul(gt_inv, ad::log(ad::affine(p, -1.0, 1.0))));
  return ad::affine(ad::sum(term), -1.0 / static_cast<double>(n), 0.0);
}

ad::Tensor grid_to_tensor(const VoxelGrid& grid) {
  auto v = grid.values();
  return ad::Tensor::constant({grid.voxel_count()}, std::vector<double>(v.begin(), v.end()));
}

VoxelGrid grid_from_tensor(const ad::Tensor& t, std::size_t resolution) {
  if (t.size() != resolution * resolution * resolution)
    throw DimensionError("grid_from_tensor: tensor has " + std::to_string(t.size()) +
                         " values, grid needs " + std::to_string(resolution * resolution * resolution));
  auto v = t.values();
  return VoxelGrid::from_values(resolution, std::vector<double>(v.begin(), v.end()));
}

// ---- file formats ----------------------------------------------------------

std::vector<std::uint8_t> pack_occupancy(std::span<const double> values) {
  std::vector<std::uint8_t> bytes((values.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == 1.0) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return bytes;
}

std::vector<double> unpack_occupancy(std::span<const std::uint8_t> bytes, std::size_t count) {
  std::vector<double> values(count, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    values[i] = (bytes[i / 8] >> (i % 8)) & 1u ? 1.0 : 0.0;
  return values;
}

void save_voxb(const std::filesystem::path& path, const VoxelGrid& grid) {
  if (!grid.is_binary()) throw ContractError("save_voxb: grid is not binary");
  BinaryWriter out(path);
  out.magic("VOXB");
  out.u32(kVoxVersion);
  out.u32(static_cast<std::uint32_t>(grid.resolution()));
  out.bytes(pack_occupancy(grid.values()));
  out.close();
}

VoxelGrid load_voxb(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("VOXB");
  const std::uint32_t version = in.u32();
  if (version != kVoxVersion) in.fail("unsupported version " + std::to_string(version));
  const std::uint32_t r = in.u32();
  if (r == 0) in.fail("zero resolution");
  const std::size_t count = static_cast<std::size_t>(r) * r * r;
  auto bytes = in.bytes((count + 7) / 8);
  in.expect_end();
  return VoxelGrid::from_binary(r, unpack_occupancy(bytes, count));
}

void save_voxf(const std::filesystem::path& path, const VoxelGrid& grid) {
  BinaryWriter out(path);
  out.magic("VOXF");
  out.u32(kVoxVersion);
  out.u32(static_cast<std::uint32_t>(grid.resolution()));
  for (double v : grid.values()) out.f32(static_cast<float>(v));
  out.close();
}

VoxelGrid load_voxf(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("VOXF");
  const std::uint32_t version = in.u32();
  if (version != kVoxVersion) in.fail("unsupported version " + std::to_string(version));
  const std::uint32_t r = in.u32();
  if (r == 0) in.fail("zero resolution");
  const std::size_t count = static_cast<std::size_t>(r) * r * r;
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = in.f32();
    if (!(v >= 0.0f && v <= 1.0f)) in.fail("voxel value outside [0,1]");
    values[i] = static_cast<double>(v);
  }
  in.expect_end();
  return VoxelGrid::from_values(r, std::move(values));
}

}  // namespace voxmem
