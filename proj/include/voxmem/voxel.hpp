#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxmem/errors.hpp"
#include "voxmem/tensor.hpp"

namespace voxmem {

// Cubic occupancy grid with values in [0,1], row-major over (i,j,k).
// Immutable once built through the factory paths; the binary flag certifies
// that every value is exactly 0.0 or 1.0.
class VoxelGrid {
 public:
  explicit VoxelGrid(std::size_t resolution, double fill = 0.0);
  static VoxelGrid from_values(std::size_t resolution, std::vector<double> values);
  static VoxelGrid from_binary(std::size_t resolution, std::vector<double> values);

  std::size_t resolution() const { return resolution_; }
  std::size_t voxel_count() const { return values_.size(); }
  bool is_binary() const { return binary_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * resolution_ + j) * resolution_ + k;
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[index(i, j, k)];
  }
  void set(std::size_t i, std::size_t j, std::size_t k, double v);

  std::span<const double> values() const { return values_; }

  std::size_t occupied_count() const;  // values strictly above 0.5

  bool operator==(const VoxelGrid& other) const {
    return resolution_ == other.resolution_ && values_ == other.values_;
  }

 private:
  std::size_t resolution_;
  std::vector<double> values_;
  bool binary_ = false;
};

// Thresholded occupancy: value > t maps to 1.0, else 0.0 (strict inequality).
VoxelGrid binarize(const VoxelGrid& grid, double threshold);

// 1 - mean squared voxel difference; symmetric, equals 1 iff the grids match.
double value_similarity(const VoxelGrid& a, const VoxelGrid& b);

// Intersection over union of binarize(predicted, threshold) against a binary
// ground truth. Both grids empty counts as perfect agreement (1.0).
double iou(const VoxelGrid& predicted, const VoxelGrid& ground_truth, double threshold);

// Mean voxel-wise binary cross entropy, negated so it is non-negative and
// minimized at a perfect prediction. Probabilities are clamped to
// [eps, 1-eps] with eps = 1e-7 inside the loss; stored grids are untouched.
// `predicted` must hold post-sigmoid probabilities and have r^3 elements.
ad::Tensor bce_loss(const ad::Tensor& predicted, const VoxelGrid& ground_truth);

constexpr double kBceEpsilon = 1e-7;

// Adapters between grids and flat tensors (length r^3, row-major).
ad::Tensor grid_to_tensor(const VoxelGrid& grid);
VoxelGrid grid_from_tensor(const ad::Tensor& t, std::size_t resolution);

// ---- file formats ----------------------------------------------------------

// "VOXB": magic, version u32, r u32, bit-packed occupancy (row-major,
// LSB-first, zero-padded to a byte boundary).
void save_voxb(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid load_voxb(const std::filesystem::path& path);

// "VOXF": magic, version u32, r u32, f32[] little-endian.
void save_voxf(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid load_voxf(const std::filesystem::path& path);

// Bit packing shared with the memory snapshot format.
std::vector<std::uint8_t> pack_occupancy(std::span<const double> values);
std::vector<double> unpack_occupancy(std::span<const std::uint8_t> bytes, std::size_t count);

}  // namespace voxmem
