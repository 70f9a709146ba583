#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "voxmem/voxel.hpp"

namespace voxmem {

// Cosine similarity between a query feature and a key. Rejects near-zero
// vectors.
double key_similarity(std::span<const double> feature, std::span<const double> key);

struct MemorySlot {
  std::vector<double> key;  // unit L2 norm
  VoxelGrid value;          // binary occupancy
  std::uint64_t age = 0;
};

struct WriteOutcome {
  enum class Kind { UpdatedSimilar, InsertedNew };
  Kind kind;
  std::size_t slot;
};

// One retrieved item: a stored volume plus the key similarity that selected
// it. Sequences are ordered by descending similarity, ties to the lower slot
// index.
struct Retrieved {
  const VoxelGrid* value;
  double key_similarity;
  std::size_t slot;
};

using RetrievedSequence = std::vector<Retrieved>;

// Hardest positive/negative pair mined from the bank: the most key-similar
// slot whose value matches the ground truth (value similarity >= delta) and
// the most key-similar slot whose value does not. Key snapshots are taken at
// mining time so the loss can be recomputed differentiably against constants.
struct MinedTriplet {
  std::size_t positive_slot;
  std::size_t negative_slot;
  std::vector<double> positive_key;
  std::vector<double> negative_key;
  double positive_key_similarity;  // S_kp
  double negative_key_similarity;  // S_kb
};

// Key-value shape-prior store. Slots hold [key, value, age]; writes either
// fold a similar example into an existing slot (key averaging, age reset) or
// insert a new pair, evicting the oldest slot when the bank is full.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t key_dim, std::size_t resolution,
             double read_threshold, double write_threshold);

  std::size_t capacity() const { return capacity_; }
  std::size_t key_dim() const { return key_dim_; }
  std::size_t resolution() const { return resolution_; }
  double read_threshold() const { return read_threshold_; }
  double write_threshold() const { return write_threshold_; }

  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  const MemorySlot& slot(std::size_t i) const { return slots_.at(i); }

  // Index of the slot whose key is most similar to the feature; ties break
  // to the lowest index.
  std::size_t nearest_key(std::span<const double> feature) const;

  WriteOutcome write(std::span<const double> feature, const VoxelGrid& value);

  // All slots whose key similarity strictly exceeds the read threshold,
  // sorted by descending similarity. May be empty. The returned pointers
  // stay valid until the next write.
  RetrievedSequence read(std::span<const double> feature) const;

  std::optional<MinedTriplet> mine_triplet(std::span<const double> feature,
                                           const VoxelGrid& ground_truth) const;

  // Writes applied to a slot since it was created (insert counts as 1);
  // reset when the slot is evicted. Runtime statistic, not persisted in
  // snapshots.
  std::uint64_t write_count(std::size_t i) const { return write_counts_.at(i); }

  // Total writes ever applied; lets callers assert that a region of code
  // performed no writes.
  std::uint64_t version() const { return version_; }

  void save(const std::filesystem::path& path) const;
  static MemoryBank load(const std::filesystem::path& path, double read_threshold,
                         double write_threshold);

 private:
  std::size_t capacity_;
  std::size_t key_dim_;
  std::size_t resolution_;
  double read_threshold_;
  double write_threshold_;
  std::vector<MemorySlot> slots_;
  std::vector<std::uint64_t> write_counts_;
  std::uint64_t version_ = 0;
};

// Fraction of retrieved values whose similarity to the query's ground truth
// reaches the write threshold; empty retrievals have no precision.
std::optional<double> retrieval_precision(const RetrievedSequence& retrieved,
                                          const VoxelGrid& ground_truth, double delta);

}  // namespace voxmem
