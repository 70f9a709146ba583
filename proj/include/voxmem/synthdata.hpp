#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxmem/rng.hpp"
#include "voxmem/voxel.hpp"

namespace voxmem::synth {

enum class PrimitiveKind { Box, Ellipsoid, Cylinder };

struct Primitive {
  PrimitiveKind kind;
  std::array<double, 3> center;   // voxel coordinates
  std::array<double, 3> extents;  // half extents / radii per axis
  int z_rot_quarter = 0;          // rotation about z in 90-degree steps
};

struct ShapeSpec {
  std::string family;  // box | ellipsoid | cylinder | composite
  std::vector<Primitive> primitives;
};

// Rasterizes the primitive union at the given resolution, then clears the
// one-voxel boundary margin. Throws GenerationError when nothing survives
// the margin clip.
VoxelGrid generate_shape(const ShapeSpec& spec, std::size_t resolution);

// Random shape within the margin-respecting parameter ranges.
ShapeSpec random_spec(Rng& rng, std::size_t resolution);

// Near-duplicate: jitters one primitive of the source spec by up to one
// voxel in center and extents.
ShapeSpec jitter_spec(const ShapeSpec& spec, Rng& rng);

struct CorruptionParams {
  double occlusion_fraction = 0.0;  // fraction of object pixels to mask, [0, 0.6]
  double clutter_density = 0.0;     // fraction of background pixels to clutter, [0, 0.5]
};

struct OccluderRect {
  std::size_t channel, x, y, w, h;
};

// c x h x w image stored as f32 so file round trips are exact.
struct Image {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<float> data;

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
};

struct RenderedExample {
  Image image;
  CorruptionParams corruption;
  std::uint64_t seed = 0;
  std::vector<OccluderRect> occluders;
};

// Three orthographic silhouette channels (projections along x, y, z),
// upsampled to image_size. Occluders zero out a rectangle grown inside each
// channel's object bounding box until the target fraction of object pixels
// is masked; clutter fills background patches with uniform noise.
RenderedExample render(const VoxelGrid& gt, const CorruptionParams& params,
                       std::size_t image_size, std::uint64_t seed);

// Exact axis projection of the grid at voxel resolution (max along the axis),
// before upsampling; axis 0 projects along x giving (j,k) and so on.
std::vector<double> silhouette(const VoxelGrid& gt, int axis);

// "IMGF": magic, c/h/w u32, f32[] little-endian.
void save_imgf(const std::filesystem::path& path, const Image& image);
Image load_imgf(const std::filesystem::path& path);

struct CorpusConfig {
  std::size_t train_count = 500;
  std::size_t test_count = 100;
  std::size_t resolution = 16;
  std::size_t image_size = 32;
  std::uint64_t seed = 7;
  double near_duplicate_threshold = 0.90;
  // Distinct base shapes are kept below this pairwise value similarity so
  // the near-duplicate threshold cleanly separates same-family pairs from
  // different-family pairs.
  double max_train_similarity = 0.895;
  // Train shapes come in families: each separated base shape spawns up to
  // this many jittered near-duplicate variants (cluster sizes are uniform in
  // 1..variants_max), mirroring instance clusters in real shape corpora.
  std::size_t variants_max = 4;
  double occlusion_train_max = 0.45;
  double clutter_train_max = 0.30;
  double occlusion_test = 0.45;
  double clutter_test = 0.35;
};

struct ManifestEntry {
  std::string id;
  std::string split;     // train | test_clean | test_occluded
  std::string shape_id;  // shared between the clean/occluded views of a shape
  std::string family;
  std::string image_file;  // relative to the corpus directory
  std::string voxel_file;
  CorruptionParams corruption;
  std::uint64_t render_seed = 0;
};

// Generates shapes, renders all three splits, writes IMGF/VOXB files plus a
// manifest.jsonl. Every test shape is constructed as a near-duplicate of
// some train shape and the guarantee is re-verified by exhaustive scan.
void build_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& corpus_dir);

}  // namespace voxmem::synth
