#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "voxmem/voxel.hpp"

using namespace voxmem;

namespace {

VoxelGrid random_binary(Rng& rng, std::size_t r, double density = 0.5) {
  std::vector<double> v(r * r * r);
  for (double& x : v) x = rng.chance(density) ? 1.0 : 0.0;
  return VoxelGrid::from_binary(r, std::move(v));
}

VoxelGrid random_probabilities(Rng& rng, std::size_t r) {
  std::vector<double> v(r * r * r);
  for (double& x : v) x = rng.next_double();
  return VoxelGrid::from_values(r, std::move(v));
}

// Independent set-arithmetic IoU over occupied index sets.
double iou_oracle(const VoxelGrid& p, const VoxelGrid& gt, double t) {
  std::size_t inter = 0, uni = 0;
  auto pv = p.values();
  auto gv = gt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const bool a = pv[i] > t;
    const bool b = gv[i] == 1.0;
    if (a && b) ++inter;
    if (a || b) ++uni;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("binarize uses strict inequality and is idempotent") {
  VoxelGrid g = VoxelGrid::from_values(2, std::vector<double>(8, 0.3));
  VoxelGrid b = binarize(g, 0.3);
  for (double v : b.values()) CHECK(v == 0.0);

  VoxelGrid g2 = VoxelGrid::from_values(2, {0.29, 0.31, 0.29, 0.31, 0.29, 0.31, 0.29, 0.31});
  VoxelGrid b2 = binarize(g2, 0.3);
  CHECK(b2.values()[0] == 0.0);
  CHECK(b2.values()[1] == 1.0);
  CHECK(b2.is_binary());

  Rng rng(3);
  VoxelGrid bin = random_binary(rng, 4);
  for (double t : {0.1, 0.5, 0.9}) CHECK(binarize(bin, t) == bin);
}

TEST_CASE("binarize validates the threshold") {
  VoxelGrid g(2);
  CHECK_THROWS_AS(binarize(g, 0.0), ConfigError);
  CHECK_THROWS_AS(binarize(g, 1.0), ConfigError);
  CHECK_THROWS_AS(binarize(g, -2.0), ConfigError);
}

TEST_CASE("value similarity hand values") {
  Rng rng(17);
  VoxelGrid a = random_binary(rng, 4);
  CHECK(value_similarity(a, a) == 1.0);

  VoxelGrid ones(2, 1.0), zeros(2, 0.0);
  CHECK(value_similarity(ones, zeros) == 0.0);

  // 2 of 8 voxels differ -> 1 - 2/8
  std::vector<double> v1 = {1, 1, 0, 0, 1, 0, 1, 0};
  std::vector<double> v2 = {1, 0, 0, 0, 1, 1, 1, 0};
  CHECK(value_similarity(VoxelGrid::from_binary(2, v1), VoxelGrid::from_binary(2, v2)) == 0.75);
}

TEST_CASE("value similarity is symmetric and peaks at equality") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    VoxelGrid a = random_probabilities(rng, 3);
    VoxelGrid b = random_probabilities(rng, 3);
    CHECK(value_similarity(a, b) == value_similarity(b, a));
    if (!(a == b)) CHECK(value_similarity(a, b) < 1.0);
  }
  VoxelGrid a = random_binary(rng, 3);
  VoxelGrid b = random_binary(rng, 3);
  const double s = value_similarity(a, b);
  CHECK(s >= 0.0);
  CHECK(s <= 1.0);
  CHECK_THROWS_AS(value_similarity(VoxelGrid(2), VoxelGrid(3)), DimensionError);
}

TEST_CASE("iou hand values") {
  Rng rng(29);
  VoxelGrid g = random_binary(rng, 4);
  CHECK(iou(g, g, 0.5) == 1.0);

  VoxelGrid p(2), q(2);
  p.set(0, 0, 0, 1.0);
  q.set(1, 1, 1, 1.0);
  CHECK(iou(p, q, 0.5) == 0.0);

  // p occupies {A,B}, gt occupies {B,C} -> 1/3
  VoxelGrid pa(2), gt(2);
  pa.set(0, 0, 0, 1.0);
  pa.set(0, 0, 1, 1.0);
  gt.set(0, 0, 1, 1.0);
  gt.set(0, 1, 0, 1.0);
  CHECK(iou(pa, gt, 0.5) == 1.0 / 3.0);
}

TEST_CASE("iou matches the set oracle on every pair of 2x2x2-corner grids") {
  // All 256 x 256 pairs of 2^3 binary grids.
  auto grid_from_mask = [](unsigned mask) {
    std::vector<double> v(8, 0.0);
    for (int b = 0; b < 8; ++b)
      if (mask & (1u << b)) v[static_cast<std::size_t>(b)] = 1.0;
    return VoxelGrid::from_binary(2, std::move(v));
  };
  for (unsigned mp = 0; mp < 256; ++mp) {
    VoxelGrid p = grid_from_mask(mp);
    for (unsigned mg = 0; mg < 256; ++mg) {
      VoxelGrid g = grid_from_mask(mg);
      REQUIRE(iou(p, g, 0.3) == iou_oracle(p, g, 0.3));
    }
  }
}

TEST_CASE("iou is invariant to thresholds between grid values") {
  Rng rng(31);
  VoxelGrid p = random_probabilities(rng, 3);
  VoxelGrid gt = random_binary(rng, 3);
  // No grid value falls in (0.40, 0.45) with probability ~1 for 27 draws;
  // enforce by construction instead.
  std::vector<double> v(p.values().begin(), p.values().end());
  for (double& x : v)
    if (x > 0.40 && x < 0.45) x = 0.5;
  p = VoxelGrid::from_values(3, std::move(v));
  CHECK(iou(p, gt, 0.405) == iou(p, gt, 0.445));
}

TEST_CASE("bce hand values") {
  VoxelGrid gt(2);
  gt.set(0, 0, 0, 1.0);
  gt.set(1, 1, 1, 1.0);

  ad::Tensor uniform = ad::Tensor::full({8}, 0.5);
  CHECK(std::abs(bce_loss(uniform, gt).value() - std::log(2.0)) < 1e-12);

  // Perfect prediction: loss bounded by the clamp epsilon.
  auto gv = gt.values();
  ad::Tensor perfect = ad::Tensor::constant({8}, std::vector<double>(gv.begin(), gv.end()));
  const double loss = bce_loss(perfect, gt).value();
  CHECK(loss >= 0.0);
  CHECK(loss <= -std::log(1.0 - kBceEpsilon) * (1.0 + 1e-12));
}

TEST_CASE("bce gradient matches finite differences on a random 4^3 grid") {
  Rng rng(37);
  VoxelGrid gt = random_binary(rng, 4);
  ad::Tensor p =
      ad::Tensor::variable({64}, testutil::random_values(rng, 64, 0.05, 0.95));
  auto forward = [&]() { return bce_loss(p, gt); };
  CHECK(testutil::max_grad_error(forward, {p}) < 1e-4);
}

TEST_CASE("bce is non-negative and minimized exactly at the target") {
  Rng rng(41);
  VoxelGrid gt = random_binary(rng, 3);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v = testutil::random_values(rng, 27, 0.0, 1.0);
    ad::Tensor p = ad::Tensor::constant({27}, v);
    CHECK(bce_loss(p, gt).value() >= 0.0);
  }
  auto gv = gt.values();
  ad::Tensor exact = ad::Tensor::constant({27}, std::vector<double>(gv.begin(), gv.end()));
  CHECK(bce_loss(exact, gt).value() <= 2.0 * kBceEpsilon);
}

TEST_CASE("voxb and voxf round-trip") {
  Rng rng(43);
  auto dir = std::filesystem::temp_directory_path();

  VoxelGrid bin = random_binary(rng, 5);
  const auto pb = dir / "voxmem_test.voxb";
  save_voxb(pb, bin);
  CHECK(load_voxb(pb) == bin);

  VoxelGrid prob = random_probabilities(rng, 5);
  const auto pf = dir / "voxmem_test.voxf";
  save_voxf(pf, prob);
  VoxelGrid back = load_voxf(pf);
  REQUIRE(back.resolution() == 5);
  for (std::size_t i = 0; i < back.voxel_count(); ++i)
    CHECK(back.values()[i] == static_cast<double>(static_cast<float>(prob.values()[i])));

  // Truncation is detected with a byte offset in the message.
  auto truncated = dir / "voxmem_trunc.voxb";
  {
    std::ifstream in(pb, std::ios::binary);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    buf.resize(buf.size() / 2);
    std::ofstream out(truncated, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  CHECK_THROWS_WITH_AS(load_voxb(truncated), doctest::Contains("byte offset"), FormatError);

  std::filesystem::remove(pb);
  std::filesystem::remove(pf);
  std::filesystem::remove(truncated);
}

TEST_CASE("grids reject out-of-range values and mismatched sizes") {
  CHECK_THROWS_AS(VoxelGrid::from_values(2, std::vector<double>(8, 1.5)), ContractError);
  CHECK_THROWS_AS(VoxelGrid::from_values(2, std::vector<double>(7, 0.5)), DimensionError);
  CHECK_THROWS_AS(VoxelGrid::from_binary(2, std::vector<double>(8, 0.5)), ContractError);
}
