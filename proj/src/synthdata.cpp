#include "voxmem/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "voxmem/binio.hpp"

namespace voxmem::synth {

namespace {

bool inside_primitive(const Primitive& prim, double px, double py, double pz) {
  double dx = px - prim.center[0];
  double dy = py - prim.center[1];
  const double dz = pz - prim.center[2];
  // Inverse quarter-turn about z (exact).
  switch (((prim.z_rot_quarter % 4) + 4) % 4) {
    case 1: {
      const double t = dx;
      dx = dy;
      dy = -t;
      break;
    }
    case 2:
      dx = -dx;
      dy = -dy;
      break;
    case 3: {
      const double t = dx;
      dx = -dy;
      dy = t;
      break;
    }
    default:
      break;
  }
  const auto& e = prim.extents;
  switch (prim.kind) {
    case PrimitiveKind::Box:
      return std::abs(dx) <= e[0] && std::abs(dy) <= e[1] && std::abs(dz) <= e[2];
    case PrimitiveKind::Ellipsoid: {
      const double q = (dx / e[0]) * (dx / e[0]) + (dy / e[1]) * (dy / e[1]) +
                       (dz / e[2]) * (dz / e[2]);
      return q <= 1.0;
    }
    case PrimitiveKind::Cylinder: {
      const double q = (dx / e[0]) * (dx / e[0]) + (dy / e[1]) * (dy / e[1]);
      return q <= 1.0 && std::abs(dz) <= e[2];
    }
  }
  return false;
}

}  // namespace

VoxelGrid generate_shape(const ShapeSpec& spec, std::size_t resolution) {
  if (spec.primitives.empty()) throw GenerationError("generate_shape: spec has no primitives");
  const std::size_t r = resolution;
  VoxelGrid grid(r);
  std::size_t count = 0;
  for (std::size_t i = 1; i + 1 < r; ++i)
    for (std::size_t j = 1; j + 1 < r; ++j)
      for (std::size_t k = 1; k + 1 < r; ++k) {
        for (const Primitive& prim : spec.primitives) {
          if (inside_primitive(prim, static_cast<double>(i), static_cast<double>(j),
                               static_cast<double>(k))) {
            grid.set(i, j, k, 1.0);
            ++count;
            break;
          }
        }
      }
  if (count == 0)
    throw GenerationError("generate_shape: degenerate spec, empty after margin clip");
  return grid;
}

ShapeSpec random_spec(Rng& rng, std::size_t resolution) {
  const double r = static_cast<double>(resolution);
  const double s = r / 16.0;  // parameter scale relative to the reference grid

  // Extents and centers come from coarse lattices: near-miss parameter draws
  // would produce distinct shapes whose value similarity straddles the
  // near-duplicate threshold, which must separate same-shape pairs from
  // different-shape pairs.
  auto pick_extent = [&](std::span<const double> choices) {
    return s * choices[rng.below(choices.size())];
  };
  auto place = [&](Primitive& p) {
    for (int a = 0; a < 3; ++a) {
      const double lo = 1.0 + p.extents[a];
      const double hi = std::max(lo, r - 2.0 - p.extents[a]);
      const auto steps = static_cast<std::uint64_t>((hi - lo) / (2.0 * s)) + 1;
      p.center[a] = std::min(hi, lo + 2.0 * s * static_cast<double>(rng.below(steps)));
    }
    p.z_rot_quarter = static_cast<int>(rng.below(4));
  };
  auto random_kind = [&]() {
    const double roll = rng.next_double();
    return roll < 0.4 ? PrimitiveKind::Box
                      : (roll < 0.75 ? PrimitiveKind::Ellipsoid : PrimitiveKind::Cylinder);
  };

  static constexpr double kSingle[] = {3.0, 4.5, 6.0};
  static constexpr double kPart[] = {2.0, 3.0, 4.0};

  ShapeSpec spec;
  const double roll = rng.next_double();
  if (roll < 0.30) {
    Primitive p{};
    p.kind = random_kind();
    for (int a = 0; a < 3; ++a) p.extents[a] = pick_extent(kSingle);
    place(p);
    spec.primitives.push_back(p);
    spec.family = p.kind == PrimitiveKind::Box
                      ? "box"
                      : (p.kind == PrimitiveKind::Ellipsoid ? "ellipsoid" : "cylinder");
  } else {
    spec.family = "composite";
    const std::size_t parts = 2 + rng.below(3);
    for (std::size_t i = 0; i < parts; ++i) {
      Primitive p{};
      p.kind = random_kind();
      for (int a = 0; a < 3; ++a) p.extents[a] = pick_extent(kPart);
      place(p);
      spec.primitives.push_back(p);
    }
  }
  return spec;
}

ShapeSpec jitter_spec(const ShapeSpec& spec, Rng& rng) {
  ShapeSpec out = spec;
  Primitive& p = out.primitives[rng.below(out.primitives.size())];
  for (int a = 0; a < 3; ++a) {
    p.center[a] += static_cast<double>(rng.uniform_int(-1, 1));
    p.extents[a] = std::max(1.0, p.extents[a] + 0.5 * static_cast<double>(rng.uniform_int(-1, 1)));
  }
  return out;
}

std::vector<double> silhouette(const VoxelGrid& gt, int axis) {
  const std::size_t r = gt.resolution();
  std::vector<double> mask(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t k = 0; k < r; ++k)
        if (gt.at(i, j, k) == 1.0) {
          // Remaining axes in index order form the (row, col) of the mask.
          std::size_t row = 0, col = 0;
          if (axis == 0) {
            row = j;
            col = k;
          } else if (axis == 1) {
            row = i;
            col = k;
          } else {
            row = i;
            col = j;
          }
          mask[row * r + col] = 1.0;
        }
  return mask;
}

namespace {

struct ChannelView {
  Image* img;
  std::size_t channel;
  std::size_t size;
  float at(std::size_t y, std::size_t x) const { return img->at(channel, y, x); }
  void set(std::size_t y, std::size_t x, float v) { img->at(channel, y, x) = v; }
};

// Grows a rectangle from one corner of the object's bounding box until the
// requested fraction of object pixels is masked.
OccluderRect occlude_channel(ChannelView ch, const std::vector<bool>& object_mask,
                             double fraction, Rng& rng) {
  const std::size_t n = ch.size;
  std::size_t min_x = n, max_x = 0, min_y = n, max_y = 0, object_pixels = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (object_mask[y * n + x]) {
        ++object_pixels;
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  if (object_pixels == 0) return {ch.channel, 0, 0, 0, 0};

  const auto target =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(object_pixels)));
  const int corner = static_cast<int>(rng.below(4));
  const bool from_left = corner == 0 || corner == 2;
  const bool from_top = corner < 2;

  const std::size_t bw = max_x - min_x + 1, bh = max_y - min_y + 1;
  std::size_t w = 1, h = 1;
  auto masked_object = [&](std::size_t rw, std::size_t rh) {
    std::size_t cnt = 0;
    for (std::size_t dy = 0; dy < rh; ++dy)
      for (std::size_t dx = 0; dx < rw; ++dx) {
        const std::size_t x = from_left ? min_x + dx : max_x - dx;
        const std::size_t y = from_top ? min_y + dy : max_y - dy;
        if (object_mask[y * n + x]) ++cnt;
      }
    return cnt;
  };
  bool widen = true;
  while (masked_object(w, h) < target && (w < bw || h < bh)) {
    if ((widen && w < bw) || h >= bh)
      ++w;
    else
      ++h;
    widen = !widen;
  }
  const std::size_t rx = from_left ? min_x : max_x - (w - 1);
  const std::size_t ry = from_top ? min_y : max_y - (h - 1);
  for (std::size_t dy = 0; dy < h; ++dy)
    for (std::size_t dx = 0; dx < w; ++dx) ch.set(ry + dy, rx + dx, 0.0f);
  return {ch.channel, rx, ry, w, h};
}

void clutter_channel(ChannelView ch, const std::vector<bool>& object_mask, double density,
                     Rng& rng) {
  const std::size_t n = ch.size;
  std::size_t background = 0;
  for (bool b : object_mask) background += b ? 0 : 1;
  const auto target =
      static_cast<std::size_t>(std::floor(density * static_cast<double>(background)));
  std::vector<bool> covered(n * n, false);
  std::size_t covered_count = 0;
  std::size_t attempts = 0;
  while (covered_count < target && attempts < 4096) {
    ++attempts;
    const std::size_t pw = 2 + rng.below(4), pht = 2 + rng.below(4);
    const std::size_t px = rng.below(n - pw + 1), py = rng.below(n - pht + 1);
    for (std::size_t dy = 0; dy < pht; ++dy)
      for (std::size_t dx = 0; dx < pw; ++dx) {
        const std::size_t idx = (py + dy) * n + (px + dx);
        const float noise = static_cast<float>(rng.next_double());
        if (object_mask[idx]) continue;  // clutter stays outside the silhouette
        ch.set(py + dy, px + dx, noise);
        if (!covered[idx]) {
          covered[idx] = true;
          ++covered_count;
        }
      }
  }
}

}  // namespace

RenderedExample render(const VoxelGrid& gt, const CorruptionParams& params,
                       std::size_t image_size, std::uint64_t seed) {
  if (!(params.occlusion_fraction >= 0.0 && params.occlusion_fraction <= 0.6))
    throw ConfigError("render: occlusion fraction outside [0, 0.6]");
  if (!(params.clutter_density >= 0.0 && params.clutter_density <= 0.5))
    throw ConfigError("render: clutter density outside [0, 0.5]");
  if (!gt.is_binary()) throw ContractError("render: ground truth grid is not binary");

  const std::size_t r = gt.resolution();
  const std::size_t n = image_size;
  RenderedExample out;
  out.corruption = params;
  out.seed = seed;
  out.image.channels = 3;
  out.image.height = n;
  out.image.width = n;
  out.image.data.assign(3 * n * n, 0.0f);

  Rng rng(seed);
  // Occluders hit two of the three views; real occlusion hides an object
  // from some directions, not from every direction at once. The remaining
  // view keeps the object identifiable while the occluded views lose the
  // geometry that has to be recovered.
  const std::size_t spared_channel = rng.below(3);
  for (int axis = 0; axis < 3; ++axis) {
    const std::vector<double> mask = silhouette(gt, axis);
    const auto c = static_cast<std::size_t>(axis);
    std::vector<bool> object_mask(n * n, false);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        // Nearest-voxel upsampling of the silhouette.
        const std::size_t vy = std::min(r - 1, y * r / n);
        const std::size_t vx = std::min(r - 1, x * r / n);
        const bool on = mask[vy * r + vx] == 1.0;
        object_mask[y * n + x] = on;
        out.image.at(c, y, x) = on ? 1.0f : 0.0f;
      }

    ChannelView view{&out.image, c, n};
    if (params.occlusion_fraction > 0.0 && c != spared_channel)
      out.occluders.push_back(occlude_channel(view, object_mask, params.occlusion_fraction, rng));
    if (params.clutter_density > 0.0)
      clutter_channel(view, object_mask, params.clutter_density, rng);
  }
  return out;
}

void save_imgf(const std::filesystem::path& path, const Image& image) {
  BinaryWriter out(path);
  out.magic("IMGF");
  out.u32(static_cast<std::uint32_t>(image.channels));
  out.u32(static_cast<std::uint32_t>(image.height));
  out.u32(static_cast<std::uint32_t>(image.width));
  for (float v : image.data) out.f32(v);
  out.close();
}

Image load_imgf(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("IMGF");
  Image img;
  img.channels = in.u32();
  img.height = in.u32();
  img.width = in.u32();
  const std::size_t n = img.channels * img.height * img.width;
  if (n == 0) in.fail("empty image");
  img.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = in.f32();
  in.expect_end();
  return img;
}

// ---- corpus -----------------------------------------------------------------

namespace {

using nlohmann::json;

json corruption_json(const CorruptionParams& c) {
  return json{{"occlusion_fraction", c.occlusion_fraction},
              {"clutter_density", c.clutter_density}};
}

struct BuiltShape {
  ShapeSpec spec;
  VoxelGrid grid;
};

// Valid shape whose value similarity to every accepted shape stays below the
// separation bound.
BuiltShape make_separated_shape(std::uint64_t seed, std::size_t resolution,
                                const std::vector<BuiltShape>& accepted, double max_similarity) {
  for (int attempt = 0; attempt < 256; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    ShapeSpec spec = random_spec(rng, resolution);
    try {
      VoxelGrid grid = generate_shape(spec, resolution);
      bool separated = true;
      for (const BuiltShape& other : accepted)
        if (value_similarity(grid, other.grid) > max_similarity) {
          separated = false;
          break;
        }
      if (separated) return {std::move(spec), std::move(grid)};
    } catch (const GenerationError&) {
    }
  }
  throw GenerationError("build_corpus: could not generate a sufficiently distinct shape");
}

}  // namespace

void build_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir) {
  if (config.train_count == 0 || config.test_count == 0)
    throw ConfigError("build_corpus: counts must be positive");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "train");
  fs::create_directories(out_dir / "test_clean");
  fs::create_directories(out_dir / "test_occluded");

  // Train shapes come in families: separated bases plus jittered
  // near-duplicate variants.
  std::vector<BuiltShape> bases;
  std::vector<BuiltShape> train;
  std::vector<std::string> train_family_ids;
  train.reserve(config.train_count);
  for (std::size_t cluster = 0; train.size() < config.train_count; ++cluster) {
    BuiltShape base = make_separated_shape(mix_seed(config.seed, 1000 + cluster),
                                           config.resolution, bases,
                                           config.max_train_similarity);
    Rng rng(mix_seed(config.seed, 150000 + cluster));
    const std::size_t want =
        1 + (config.variants_max > 1 ? rng.below(config.variants_max) : 0);
    const std::string family_id = "fam_" + std::to_string(cluster);

    train.push_back(base);
    train_family_ids.push_back(family_id);
    for (std::size_t v = 1; v < want && train.size() < config.train_count; ++v) {
      bool done = false;
      for (int attempt = 0; attempt < 64 && !done; ++attempt) {
        Rng vr(mix_seed(config.seed, 160000 + cluster * 131 + v * 7 + attempt));
        ShapeSpec spec = jitter_spec(base.spec, vr);
        try {
          VoxelGrid grid = generate_shape(spec, config.resolution);
          if (value_similarity(grid, base.grid) >= config.near_duplicate_threshold) {
            train.push_back({std::move(spec), std::move(grid)});
            train_family_ids.push_back(family_id);
            done = true;
          }
        } catch (const GenerationError&) {
        }
      }
      if (!done) break;  // family stays smaller; the next base fills the count
    }
    bases.push_back(std::move(base));
  }

  // Test shapes: near-duplicates of random train shapes.
  std::vector<BuiltShape> test;
  std::vector<std::size_t> source_of;
  test.reserve(config.test_count);
  for (std::size_t j = 0; j < config.test_count; ++j) {
    bool done = false;
    for (int attempt = 0; attempt < 64 && !done; ++attempt) {
      Rng rng(mix_seed(config.seed, 2000 + j * 101 + static_cast<std::size_t>(attempt)));
      const std::size_t src = static_cast<std::size_t>(rng.below(config.train_count));
      ShapeSpec spec = jitter_spec(train[src].spec, rng);
      try {
        VoxelGrid grid = generate_shape(spec, config.resolution);
        if (value_similarity(grid, train[src].grid) >= config.near_duplicate_threshold) {
          test.push_back({std::move(spec), std::move(grid)});
          source_of.push_back(src);
          done = true;
        }
      } catch (const GenerationError&) {
      }
    }
    if (!done)
      throw GenerationError("build_corpus: near-duplicate constraint unsatisfiable for test " +
                            std::to_string(j));
  }

  // Verification by exhaustive scan: every test shape has a train shape
  // within the near-duplicate threshold.
  for (std::size_t j = 0; j < test.size(); ++j) {
    double best = -1.0;
    for (const BuiltShape& t : train)
      best = std::max(best, value_similarity(test[j].grid, t.grid));
    if (best < config.near_duplicate_threshold)
      throw GenerationError("build_corpus: verification failed for test shape " +
                            std::to_string(j));
  }

  auto id_of = [](const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu", prefix, i);
    return std::string(buf);
  };

  std::vector<json> manifest;
  auto emit = [&](const std::string& id, const std::string& split, const std::string& shape_id,
                  const std::string& family, const VoxelGrid& grid,
                  const CorruptionParams& corruption, std::uint64_t render_seed) {
    const std::string image_file = split + "/" + id + ".imgf";
    const std::string voxel_file = split + "/" + id + ".voxb";
    RenderedExample ex = render(grid, corruption, config.image_size, render_seed);
    save_imgf(out_dir / image_file, ex.image);
    save_voxb(out_dir / voxel_file, grid);
    manifest.push_back(json{{"id", id},
                            {"split", split},
                            {"shape_id", shape_id},
                            {"family", family},
                            {"image_file", image_file},
                            {"voxel_file", voxel_file},
                            {"corruption", corruption_json(corruption)},
                            {"render_seed", render_seed}});
  };

  for (std::size_t i = 0; i < train.size(); ++i) {
    Rng rng(mix_seed(config.seed, 3000 + i));
    CorruptionParams c{rng.uniform(0.0, config.occlusion_train_max),
                       rng.uniform(0.0, config.clutter_train_max)};
    emit(id_of("train", i), "train", train_family_ids[i], train[i].spec.family, train[i].grid, c,
         mix_seed(config.seed, 5000 + i));
  }
  for (std::size_t j = 0; j < test.size(); ++j) {
    const std::string shape_id = id_of("tshape", j);
    emit(id_of("clean", j), "test_clean", shape_id, test[j].spec.family, test[j].grid,
         CorruptionParams{0.0, 0.0}, mix_seed(config.seed, 6000 + j));
    emit(id_of("occl", j), "test_occluded", shape_id, test[j].spec.family, test[j].grid,
         CorruptionParams{config.occlusion_test, config.clutter_test},
         mix_seed(config.seed, 7000 + j));
  }

  std::ofstream mf(out_dir / "manifest.jsonl");
  if (!mf) throw IoError("cannot write manifest in " + out_dir.string());
  for (const json& line : manifest) mf << line.dump() << "\n";
  mf.close();
  if (!mf) throw IoError("manifest write failed in " + out_dir.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& corpus_dir) {
  const auto path = corpus_dir / "manifest.jsonl";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.split = j.at("split").get<std::string>();
      e.shape_id = j.at("shape_id").get<std::string>();
      e.family = j.at("family").get<std::string>();
      e.image_file = j.at("image_file").get<std::string>();
      e.voxel_file = j.at("voxel_file").get<std::string>();
      e.corruption.occlusion_fraction = j.at("corruption").at("occlusion_fraction").get<double>();
      e.corruption.clutter_density = j.at("corruption").at("clutter_density").get<double>();
      e.render_seed = j.at("render_seed").get<std::uint64_t>();
    } catch (const json::exception& e2) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e2.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace voxmem::synth
