#include "voxmem/memory_bank.hpp"

#include <algorithm>
#include <cmath>

#include "voxmem/binio.hpp"

namespace voxmem {

namespace {

constexpr std::uint32_t kSnapshotVersion = 1;
constexpr double kTinyNorm = 1e-12;

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void check_threshold(double t, const char* name) {
  if (!(t > 0.0 && t < 1.0))
    throw ConfigError(std::string("memory bank: ") + name + " must lie in (0,1), got " +
                      std::to_string(t));
}

}  // namespace

double key_similarity(std::span<const double> feature, std::span<const double> key) {
  if (feature.size() != key.size())
    throw DimensionError("key_similarity: dimension mismatch " + std::to_string(feature.size()) +
                         " vs " + std::to_string(key.size()));
  double dot = 0.0, nf2 = 0.0, nk2 = 0.0;
  for (std::size_t i = 0; i < feature.size(); ++i) {
    dot += feature[i] * key[i];
    nf2 += feature[i] * feature[i];
    nk2 += key[i] * key[i];
  }
  const double nf = std::sqrt(nf2), nk = std::sqrt(nk2);
  if (nf < kTinyNorm || nk < kTinyNorm)
    throw DegenerateInputError("key_similarity: near-zero vector");
  return dot / (nf * nk);
}

MemoryBank::MemoryBank(std::size_t capacity, std::size_t key_dim, std::size_t resolution,
                       double read_threshold, double write_threshold)
    : capacity_(capacity),
      key_dim_(key_dim),
      resolution_(resolution),
      read_threshold_(read_threshold),
      write_threshold_(write_threshold) {
  if (capacity_ == 0) throw ConfigError("memory bank: capacity must be positive");
  if (key_dim_ == 0) throw ConfigError("memory bank: key dimension must be positive");
  if (resolution_ == 0) throw ConfigError("memory bank: resolution must be positive");
  check_threshold(read_threshold_, "read threshold");
  check_threshold(write_threshold_, "write threshold");
}

std::size_t MemoryBank::nearest_key(std::span<const double> feature) const {
  if (slots_.empty()) throw EmptyBankError("nearest_key: bank is empty");
  std::size_t best = 0;
  double best_sim = key_similarity(feature, slots_[0].key);
  for (std::size_t i = 1; i < slots_.size(); ++i) {
    const double sim = key_similarity(feature, slots_[i].key);
    if (sim > best_sim) {  // strict: ties keep the lowest index
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

WriteOutcome MemoryBank::write(std::span<const double> feature, const VoxelGrid& value) {
  if (feature.size() != key_dim_)
    throw DimensionError("write: feature dimension " + std::to_string(feature.size()) +
                         ", bank expects " + std::to_string(key_dim_));
  if (value.resolution() != resolution_)
    throw DimensionError("write: value resolution " + std::to_string(value.resolution()) +
                         ", bank expects " + std::to_string(resolution_));
  if (!value.is_binary()) throw ContractError("write: value grid is not binary");
  const double feature_norm = l2_norm(feature);
  if (feature_norm < kTinyNorm) throw DegenerateInputError("write: near-zero feature");

  ++version_;

  if (!slots_.empty()) {
    const std::size_t n1 = nearest_key(feature);
    if (value_similarity(value, slots_[n1].value) >= write_threshold_) {
      // Similar example: fold the feature into the key, keep the value.
      MemorySlot& s = slots_[n1];
      std::vector<double> merged(key_dim_);
      for (std::size_t i = 0; i < key_dim_; ++i) merged[i] = feature[i] + s.key[i];
      const double norm = l2_norm(merged);
      if (norm >= kTinyNorm) {
        for (double& x : merged) x /= norm;
        s.key = std::move(merged);
      }  // else: feature opposes the key exactly; keep the existing key
      for (std::size_t i = 0; i < slots_.size(); ++i)
        if (i != n1) ++slots_[i].age;
      s.age = 0;
      ++write_counts_[n1];
      return {WriteOutcome::Kind::UpdatedSimilar, n1};
    }
  }

  // New example: fill the lowest empty slot, or evict the oldest.
  std::size_t target;
  if (slots_.size() < capacity_) {
    target = slots_.size();
    slots_.push_back(MemorySlot{std::vector<double>(key_dim_, 0.0), value, 0});
    write_counts_.push_back(0);
  } else {
    target = 0;
    for (std::size_t i = 1; i < slots_.size(); ++i)
      if (slots_[i].age > slots_[target].age) target = i;
    slots_[target].value = value;
  }
  MemorySlot& s = slots_[target];
  s.key.resize(key_dim_);
  for (std::size_t i = 0; i < key_dim_; ++i) s.key[i] = feature[i] / feature_norm;
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (i != target) ++slots_[i].age;
  s.age = 0;
  write_counts_[target] = 1;
  return {WriteOutcome::Kind::InsertedNew, target};
}

RetrievedSequence MemoryBank::read(std::span<const double> feature) const {
  if (feature.size() != key_dim_)
    throw DimensionError("read: feature dimension " + std::to_string(feature.size()) +
                         ", bank expects " + std::to_string(key_dim_));
  if (l2_norm(feature) < kTinyNorm) throw DegenerateInputError("read: near-zero feature");

  RetrievedSequence out;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const double sim = key_similarity(feature, slots_[i].key);
    if (sim > read_threshold_) out.push_back({&slots_[i].value, sim, i});
  }
  // Stable sort keeps ties in ascending slot order.
  std::stable_sort(out.begin(), out.end(), [](const Retrieved& a, const Retrieved& b) {
    return a.key_similarity > b.key_similarity;
  });
  return out;
}

std::optional<MinedTriplet> MemoryBank::mine_triplet(std::span<const double> feature,
                                                     const VoxelGrid& ground_truth) const {
  if (feature.size() != key_dim_)
    throw DimensionError("mine_triplet: feature dimension " + std::to_string(feature.size()) +
                         ", bank expects " + std::to_string(key_dim_));
  if (ground_truth.resolution() != resolution_)
    throw DimensionError("mine_triplet: ground truth resolution mismatch");

  bool have_pos = false, have_neg = false;
  std::size_t pos = 0, neg = 0;
  double pos_sim = 0.0, neg_sim = 0.0;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const double ks = key_similarity(feature, slots_[i].key);
    if (value_similarity(ground_truth, slots_[i].value) >= write_threshold_) {
      if (!have_pos || ks > pos_sim) {
        have_pos = true;
        pos = i;
        pos_sim = ks;
      }
    } else {
      if (!have_neg || ks > neg_sim) {
        have_neg = true;
        neg = i;
        neg_sim = ks;
      }
    }
  }
  if (!have_pos || !have_neg) return std::nullopt;
  return MinedTriplet{pos, neg, slots_[pos].key, slots_[neg].key, pos_sim, neg_sim};
}

void MemoryBank::save(const std::filesystem::path& path) const {
  BinaryWriter out(path);
  out.magic("VMEM");
  out.u32(kSnapshotVersion);
  out.u32(static_cast<std::uint32_t>(capacity_));
  out.u32(static_cast<std::uint32_t>(key_dim_));
  out.u32(static_cast<std::uint32_t>(resolution_));
  out.u32(static_cast<std::uint32_t>(slots_.size()));
  for (const MemorySlot& s : slots_) {
    for (double k : s.key) out.f32(static_cast<float>(k));
    out.bytes(pack_occupancy(s.value.values()));
    out.u64(s.age);
  }
  out.close();
}

MemoryBank MemoryBank::load(const std::filesystem::path& path, double read_threshold,
                            double write_threshold) {
  BinaryReader in(path);
  in.expect_magic("VMEM");
  const std::uint32_t version = in.u32();
  if (version != kSnapshotVersion) in.fail("unsupported version " + std::to_string(version));
  const std::uint32_t capacity = in.u32();
  const std::uint32_t key_dim = in.u32();
  const std::uint32_t resolution = in.u32();
  const std::uint32_t count = in.u32();
  if (count > capacity) in.fail("slot count exceeds capacity");

  MemoryBank bank(capacity, key_dim, resolution, read_threshold, write_threshold);
  const std::size_t voxels = static_cast<std::size_t>(resolution) * resolution * resolution;
  for (std::uint32_t i = 0; i < count; ++i) {
    MemorySlot s{std::vector<double>(key_dim), VoxelGrid(resolution), 0};
    for (std::uint32_t k = 0; k < key_dim; ++k) s.key[k] = static_cast<double>(in.f32());
    auto bytes = in.bytes((voxels + 7) / 8);
    s.value = VoxelGrid::from_binary(resolution, unpack_occupancy(bytes, voxels));
    s.age = in.u64();
    bank.slots_.push_back(std::move(s));
    bank.write_counts_.push_back(0);
  }
  in.expect_end();
  return bank;
}

std::optional<double> retrieval_precision(const RetrievedSequence& retrieved,
                                          const VoxelGrid& ground_truth, double delta) {
  if (retrieved.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (const Retrieved& r : retrieved)
    if (value_similarity(ground_truth, *r.value) >= delta) ++hits;
  return static_cast<double>(hits) / static_cast<double>(retrieved.size());
}

}  // namespace voxmem
