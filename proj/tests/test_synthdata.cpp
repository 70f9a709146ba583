#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "test_util.hpp"
#include "voxmem/binio.hpp"
#include "voxmem/synthdata.hpp"

using namespace voxmem;
namespace fs = std::filesystem;

namespace {

std::uint64_t tree_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0;
  for (const auto& f : files) h ^= fnv1a64_file(f) * 0x9e3779b97f4a7c15ULL;
  return h;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("full-extent box minus margin occupies (r-2)^3") {
  synth::ShapeSpec spec;
  spec.family = "box";
  spec.primitives.push_back(
      {synth::PrimitiveKind::Box, {7.5, 7.5, 7.5}, {20.0, 20.0, 20.0}, 0});
  VoxelGrid g = synth::generate_shape(spec, 16);
  CHECK(g.occupied_count() == 14u * 14u * 14u);
}

TEST_CASE("shape generation is deterministic and margin-respecting") {
  Rng rng1(5), rng2(5);
  synth::ShapeSpec s1 = synth::random_spec(rng1, 16);
  synth::ShapeSpec s2 = synth::random_spec(rng2, 16);
  VoxelGrid g1 = synth::generate_shape(s1, 16);
  VoxelGrid g2 = synth::generate_shape(s2, 16);
  CHECK(g1 == g2);

  // Boundary voxels stay empty.
  const std::size_t r = 16;
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t b = 0; b < r; ++b) {
      CHECK(g1.at(0, a, b) == 0.0);
      CHECK(g1.at(r - 1, a, b) == 0.0);
      CHECK(g1.at(a, 0, b) == 0.0);
      CHECK(g1.at(a, r - 1, b) == 0.0);
      CHECK(g1.at(a, b, 0) == 0.0);
      CHECK(g1.at(a, b, r - 1) == 0.0);
    }
}

TEST_CASE("ellipsoid occupancy tracks the analytic volume at r=32") {
  synth::ShapeSpec spec;
  spec.family = "ellipsoid";
  const double a = 9, b = 7, c = 11;
  spec.primitives.push_back({synth::PrimitiveKind::Ellipsoid, {15.5, 15.5, 15.5}, {a, b, c}, 0});
  VoxelGrid g = synth::generate_shape(spec, 32);
  const double analytic = 4.0 / 3.0 * 3.14159265358979323846 * a * b * c;
  const double counted = static_cast<double>(g.occupied_count());
  CHECK(std::abs(counted - analytic) / analytic < 0.15);
}

TEST_CASE("degenerate specs are rejected") {
  synth::ShapeSpec spec;
  spec.family = "box";
  // Entirely inside the one-voxel margin.
  spec.primitives.push_back({synth::PrimitiveKind::Box, {0.0, 0.0, 0.0}, {0.4, 0.4, 0.4}, 0});
  CHECK_THROWS_AS(synth::generate_shape(spec, 16), GenerationError);
}

TEST_CASE("render without corruption equals the exact axis projections") {
  Rng rng(11);
  synth::ShapeSpec spec = synth::random_spec(rng, 16);
  VoxelGrid g = synth::generate_shape(spec, 16);
  synth::RenderedExample ex = synth::render(g, {0.0, 0.0}, 32, 99);
  REQUIRE(ex.image.channels == 3);

  // Independent projection: a pixel is on iff any voxel along the axis is
  // occupied at the nearest voxel coordinates.
  for (int axis = 0; axis < 3; ++axis)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const std::size_t vy = y * 16 / 32, vx = x * 16 / 32;
        bool on = false;
        for (std::size_t t = 0; t < 16; ++t) {
          double v = 0;
          if (axis == 0) v = g.at(t, vy, vx);
          if (axis == 1) v = g.at(vy, t, vx);
          if (axis == 2) v = g.at(vy, vx, t);
          on = on || v == 1.0;
        }
        CHECK(ex.image.at(static_cast<std::size_t>(axis), y, x) == (on ? 1.0f : 0.0f));
      }
}

TEST_CASE("occlusion masks the requested fraction of object pixels") {
  // Large box so the rectangle growth step is fine-grained.
  synth::ShapeSpec spec;
  spec.family = "box";
  spec.primitives.push_back({synth::PrimitiveKind::Box, {7.5, 7.5, 7.5}, {6.0, 6.0, 6.0}, 0});
  VoxelGrid g = synth::generate_shape(spec, 16);
  synth::RenderedExample clean = synth::render(g, {0.0, 0.0}, 32, 5);
  synth::RenderedExample occl = synth::render(g, {0.5, 0.0}, 32, 5);

  // One view is spared; the other two lose the requested object fraction.
  REQUIRE(occl.occluders.size() == 2);
  std::size_t spared = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t object = 0, masked = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        if (clean.image.at(c, y, x) == 1.0f) {
          ++object;
          if (occl.image.at(c, y, x) == 0.0f) ++masked;
        }
    const double fraction = static_cast<double>(masked) / static_cast<double>(object);
    if (fraction == 0.0) {
      ++spared;
      continue;
    }
    CHECK(fraction >= 0.4);
    CHECK(fraction <= 0.6);
  }
  CHECK(spared == 1);
}

TEST_CASE("render is deterministic and clutter stays off the silhouette") {
  Rng rng(13);
  synth::ShapeSpec spec = synth::random_spec(rng, 16);
  VoxelGrid g = synth::generate_shape(spec, 16);
  synth::CorruptionParams params{0.3, 0.4};
  synth::RenderedExample e1 = synth::render(g, params, 32, 321);
  synth::RenderedExample e2 = synth::render(g, params, 32, 321);
  CHECK(e1.image.data == e2.image.data);

  synth::RenderedExample clean = synth::render(g, {0.0, 0.0}, 32, 321);
  // Clutter noise only appears where the clean silhouette is off; object
  // pixels are either intact or zeroed by an occluder.
  for (std::size_t i = 0; i < e1.image.data.size(); ++i) {
    if (clean.image.data[i] == 1.0f) {
      const bool intact = e1.image.data[i] == 1.0f;
      const bool occluded = e1.image.data[i] == 0.0f;
      CHECK((intact || occluded));
    }
  }

  CHECK_THROWS_AS(synth::render(g, {0.7, 0.0}, 32, 1), ConfigError);
  CHECK_THROWS_AS(synth::render(g, {0.0, 0.6}, 32, 1), ConfigError);
}

TEST_CASE("imgf round-trips and rejects truncation") {
  Rng rng(17);
  synth::Image img;
  img.channels = 2;
  img.height = 3;
  img.width = 4;
  for (std::size_t i = 0; i < 24; ++i)
    img.data.push_back(static_cast<float>(rng.next_double()));
  auto path = fs::temp_directory_path() / "voxmem_test.imgf";
  synth::save_imgf(path, img);
  synth::Image back = synth::load_imgf(path);
  CHECK(back.channels == 2);
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.data == img.data);
  fs::remove(path);
}

TEST_CASE("corpus: deterministic, near-duplicate-verified, id-disjoint") {
  synth::CorpusConfig cfg;
  cfg.train_count = 24;
  cfg.test_count = 6;
  cfg.resolution = 16;
  cfg.image_size = 32;
  cfg.seed = 7;

  auto dir1 = fresh_dir("voxmem_corpus_a");
  auto dir2 = fresh_dir("voxmem_corpus_b");
  synth::build_corpus(cfg, dir1);
  synth::build_corpus(cfg, dir2);
  CHECK(tree_hash(dir1) == tree_hash(dir2));

  auto manifest = synth::read_manifest(dir1);
  CHECK(manifest.size() == cfg.train_count + 2 * cfg.test_count);

  std::set<std::string> ids;
  std::size_t train_n = 0, clean_n = 0, occl_n = 0;
  for (const auto& e : manifest) {
    CHECK(ids.insert(e.id).second);  // ids unique across all splits
    if (e.split == "train") ++train_n;
    if (e.split == "test_clean") ++clean_n;
    if (e.split == "test_occluded") ++occl_n;
  }
  CHECK(train_n == cfg.train_count);
  CHECK(clean_n == cfg.test_count);
  CHECK(occl_n == cfg.test_count);

  // Near-duplicate guarantee, re-checked here by exhaustive scan.
  std::vector<VoxelGrid> train_grids;
  for (const auto& e : manifest)
    if (e.split == "train") train_grids.push_back(load_voxb(dir1 / e.voxel_file));
  for (const auto& e : manifest) {
    if (e.split != "test_clean") continue;
    VoxelGrid g = load_voxb(dir1 / e.voxel_file);
    double best = -1;
    for (const auto& t : train_grids) best = std::max(best, value_similarity(g, t));
    CHECK(best >= cfg.near_duplicate_threshold);
  }

  // The occluded split shares shapes with the clean split: same voxel
  // payloads per shape_id, different images.
  for (const auto& e : manifest) {
    if (e.split != "test_occluded") continue;
    for (const auto& e2 : manifest) {
      if (e2.split == "test_clean" && e2.shape_id == e.shape_id) {
        CHECK(load_voxb(dir1 / e.voxel_file) == load_voxb(dir1 / e2.voxel_file));
        CHECK(e.corruption.occlusion_fraction > e2.corruption.occlusion_fraction);
      }
    }
  }

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
