#include "voxmem/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "voxmem/binio.hpp"
#include "voxmem/checkpoint.hpp"

namespace voxmem::pipeline {

using nlohmann::json;

// ---- corpus loading ----------------------------------------------------------

LoadedCorpus load_corpus(const std::filesystem::path& dir, const Config& config) {
  LoadedCorpus corpus;
  corpus.manifest_hash = fnv1a64_file(dir / "manifest.jsonl");
  corpus.resolution = config.corpus.resolution;
  corpus.image_dim = 3 * config.corpus.image_size * config.corpus.image_size;

  for (const synth::ManifestEntry& entry : synth::read_manifest(dir)) {
    LoadedExample ex{entry.id, entry.shape_id, {}, VoxelGrid(1)};

    synth::Image img;
    try {
      img = synth::load_imgf(dir / entry.image_file);
      ex.gt = load_voxb(dir / entry.voxel_file);
    } catch (const IoError& e) {
      throw IoError(std::string(e.what()) + " (item " + entry.id + ")");
    }
    if (img.channels * img.height * img.width != corpus.image_dim)
      throw ConfigError("corpus item " + entry.id + " has image dimensions " +
                        std::to_string(img.channels) + "x" + std::to_string(img.height) + "x" +
                        std::to_string(img.width) + ", config expects 3x" +
                        std::to_string(config.corpus.image_size) + "^2");
    if (ex.gt.resolution() != corpus.resolution)
      throw ConfigError("corpus item " + entry.id + " has resolution " +
                        std::to_string(ex.gt.resolution()) + ", config expects " +
                        std::to_string(corpus.resolution));
    ex.image.assign(img.data.begin(), img.data.end());

    if (entry.split == "train")
      corpus.train.push_back(std::move(ex));
    else if (entry.split == "test_clean")
      corpus.test_clean.push_back(std::move(ex));
    else if (entry.split == "test_occluded")
      corpus.test_occluded.push_back(std::move(ex));
    else
      throw FormatError("manifest: unknown split '" + entry.split + "'");
  }
  if (corpus.train.empty()) throw ConfigError("corpus has no training examples");
  return corpus;
}

const std::vector<LoadedExample>& split_of(const LoadedCorpus& corpus, const std::string& split) {
  if (split == "train") return corpus.train;
  if (split == "test_clean") return corpus.test_clean;
  if (split == "test_occluded") return corpus.test_occluded;
  throw ConfigError("unknown split '" + split + "' (expected train|test_clean|test_occluded)");
}

// ---- model -------------------------------------------------------------------

std::vector<ad::NamedTensor> Model::parameters() const {
  std::vector<ad::NamedTensor> out;
  encoder->collect_parameters(out);
  if (shape_encoder) shape_encoder->collect_parameters(out);
  decoder->collect_parameters(out);
  return out;
}

std::vector<ad::Tensor> Model::parameter_tensors() const {
  std::vector<ad::Tensor> out;
  for (const ad::NamedTensor& p : parameters()) out.push_back(p.tensor);
  return out;
}

Model build_model(const Config& config) {
  config.validate();
  Model model;
  model.fusion = config.model.fusion;
  model.memory_enabled = config.memory.enabled;

  const std::size_t image_dim = 3 * config.corpus.image_size * config.corpus.image_size;
  const std::size_t voxels =
      config.corpus.resolution * config.corpus.resolution * config.corpus.resolution;

  Rng rng(mix_seed(config.train.seed, 0xA11));
  model.encoder = std::make_unique<nets::EncoderNet>(image_dim, config.model.encoder_hidden,
                                                     config.memory.key_dim, rng);
  std::size_t prior_dim = 0;
  if (config.memory.enabled) {
    model.shape_encoder = std::make_unique<nets::LstmShapeEncoder>(
        voxels, config.model.embed_dim, config.model.hidden_dim, rng);
    prior_dim =
        nets::prior_dim_for(config.model.fusion, config.model.embed_dim, config.model.hidden_dim);
  }
  model.decoder = std::make_unique<nets::DecoderNet>(config.memory.key_dim, prior_dim,
                                                     config.model.decoder_hidden, voxels, rng);
  return model;
}

// ---- training ------------------------------------------------------------------

namespace {

RetrievedSequence capped(RetrievedSequence seq, std::size_t cap) {
  if (cap > 0 && seq.size() > cap) seq.resize(cap);
  return seq;
}

std::vector<double> detached(const ad::Tensor& t) {
  auto v = t.values();
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

TrainStats train(const Config& config, const LoadedCorpus& corpus, Model& model,
                 MemoryBank* bank) {
  config.validate();
  if (config.memory.enabled != (bank != nullptr))
    throw ConfigError("train: memory bank presence does not match the config");
  if (model.encoder->input_dim() != corpus.image_dim)
    throw ConfigError("train: encoder input dimension " +
                      std::to_string(model.encoder->input_dim()) + " does not match corpus " +
                      std::to_string(corpus.image_dim));
  if (bank != nullptr &&
      (bank->key_dim() != model.encoder->feature_dim() || bank->resolution() != corpus.resolution))
    throw ConfigError("train: bank dimensions do not match the model/corpus");

  ad::AdamConfig adam_cfg{config.train.lr, config.train.adam_beta1, config.train.adam_beta2,
                          config.train.adam_epsilon};
  ad::AdamState adam(model.parameter_tensors(), adam_cfg);

  TrainStats stats;
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    if (epoch == config.train.lr_halve_epoch && epoch > 0)
      adam.set_learning_rate(config.train.lr / 2.0);

    Rng shuffle_rng(mix_seed(config.train.seed, 0xE90C + epoch));
    shuffle_rng.shuffle(order);

    EpochStats es;
    es.epoch = epoch;
    double sum_triplet = 0.0, sum_bce = 0.0, sum_retrieved = 0.0;
    std::size_t mined = 0, examples = 0;

    for (std::size_t start = 0; start < order.size(); start += config.train.batch_size) {
      const std::size_t batch_end = std::min(order.size(), start + config.train.batch_size);
      const std::uint64_t version_at_step_start = bank != nullptr ? bank->version() : 0;

      ad::Tape tape;
      ad::Tensor batch_sum;
      std::vector<std::vector<double>> features;
      std::vector<const LoadedExample*> batch_examples;

      for (std::size_t bi = start; bi < batch_end; ++bi) {
        const LoadedExample& ex = corpus.train[order[bi]];
        batch_examples.push_back(&ex);

        std::vector<double> pixels;
        if (config.train.augment) {
          // Deterministic view for this example: one of `views` fixed
          // corruption draws, cycled by epoch.
          const std::size_t view =
              config.train.views > 0 ? epoch % config.train.views : epoch;
          Rng aug_rng(mix_seed(config.train.seed,
                               0xAB0000 + view * corpus.train.size() + order[bi]));
          synth::CorruptionParams cp{
              aug_rng.uniform(0.0, config.corpus.occlusion_train_max),
              aug_rng.uniform(0.0, config.corpus.clutter_train_max)};
          synth::RenderedExample rendered =
              synth::render(ex.gt, cp, config.corpus.image_size, aug_rng.next_u64());
          pixels.assign(rendered.image.data.begin(), rendered.image.data.end());
        } else {
          pixels = ex.image;
        }
        ad::Tensor image = ad::Tensor::constant({corpus.image_dim}, std::move(pixels));
        ad::Tensor feature = model.encoder->forward(image);
        features.push_back(detached(feature));

        RetrievedSequence seq;
        if (bank != nullptr) {
          seq = capped(bank->read(features.back()), config.memory.max_retrieved);
          // Read-before-write: no slot written in this step is visible yet.
          ++stats.rbw_checks;
          if (bank->version() != version_at_step_start) {
            ++stats.rbw_violations;
            throw ContractError("train: bank was written during the read phase of a step");
          }
        }

        ad::Tensor prior;
        if (bank != nullptr) prior = nets::fuse_prior(*model.shape_encoder, seq, model.fusion);
        ad::Tensor predicted = model.decoder->forward(feature, prior);
        ad::Tensor l_r = bce_loss(predicted, ex.gt);

        ad::Tensor l_t = ad::Tensor::scalar(0.0);
        if (bank != nullptr && config.train.triplet_enabled) {
          if (auto triplet = bank->mine_triplet(features.back(), ex.gt)) {
            auto [s_kp, s_kb] = nets::triplet_terms(feature, *triplet);
            l_t = nets::triplet_loss(s_kb, s_kp, config.train.margin);
            ++mined;
          }
        }

        ad::Tensor total = nets::total_loss(l_t, l_r);
        // Total-loss ledger: the combined objective is exactly the sum of
        // its branches on every example.
        ++stats.ledger_checks;
        if (std::abs(total.value() - (l_t.value() + l_r.value())) > 1e-12) {
          ++stats.ledger_violations;
          throw ContractError("train: total loss deviates from triplet + reconstruction");
        }

        sum_triplet += l_t.value();
        sum_bce += l_r.value();
        sum_retrieved += static_cast<double>(seq.size());
        ++examples;

        batch_sum = batch_sum.defined() ? ad::add(batch_sum, total) : total;
      }

      const double inv = 1.0 / static_cast<double>(batch_end - start);
      ad::Tensor batch_mean = ad::affine(batch_sum, inv, 0.0);

      adam.zero_grad();
      tape.backward(batch_mean);

      auto apply_writes = [&]() {
        if (bank == nullptr) return;
        for (std::size_t i = 0; i < batch_examples.size(); ++i) {
          const auto outcome = bank->write(features[i], batch_examples[i]->gt);
          if (outcome.kind == WriteOutcome::Kind::InsertedNew)
            ++es.inserts;
          else
            ++es.updates;
        }
      };

      if (config.train.write_before_step) {
        apply_writes();
        adam.step();
      } else {
        adam.step();
        apply_writes();
      }

      stats.step_totals.push_back(batch_mean.value());
      ++stats.steps;
    }

    es.mean_triplet = sum_triplet / static_cast<double>(examples);
    es.mean_bce = sum_bce / static_cast<double>(examples);
    es.mean_total = es.mean_triplet + es.mean_bce;
    es.bank_size = bank != nullptr ? bank->size() : 0;
    es.mean_retrieved = sum_retrieved / static_cast<double>(examples);
    es.mined_fraction = static_cast<double>(mined) / static_cast<double>(examples);
    stats.epochs.push_back(es);
  }
  return stats;
}

// ---- persistence ----------------------------------------------------------------

namespace {

void write_train_report(const std::filesystem::path& path, const Config& config,
                        const TrainStats& stats, std::uint64_t manifest_hash) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write train report: " + path.string());
  out << json{{"type", "header"},
              {"corpus_manifest_hash", manifest_hash},
              {"fusion", nets::to_string(config.model.fusion)},
              {"memory_enabled", config.memory.enabled},
              {"capacity", config.memory.capacity},
              {"triplet_enabled", config.train.triplet_enabled},
              {"epochs", config.train.epochs},
              {"seed", config.train.seed}}
          .dump()
      << "\n";
  for (const EpochStats& es : stats.epochs) {
    out << json{{"type", "epoch"},
                {"epoch", es.epoch},
                {"triplet", es.mean_triplet},
                {"bce", es.mean_bce},
                {"total", es.mean_total},
                {"bank_size", es.bank_size},
                {"mean_retrieved", es.mean_retrieved},
                {"mined_fraction", es.mined_fraction},
                {"inserts", es.inserts},
                {"updates", es.updates}}
            .dump()
        << "\n";
  }
  out << json{{"type", "summary"},
              {"steps", stats.steps},
              {"ledger_checks", stats.ledger_checks},
              {"ledger_violations", stats.ledger_violations},
              {"rbw_checks", stats.rbw_checks},
              {"rbw_violations", stats.rbw_violations}}
          .dump()
      << "\n";
  out.close();
  if (!out) throw IoError("train report write failed: " + path.string());
}

void write_memory_stats(const std::filesystem::path& path, const MemoryBank& bank) {
  json slots = json::array();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    double norm2 = 0.0;
    for (double x : bank.slot(i).key) norm2 += x * x;
    slots.push_back(json{{"slot", i},
                         {"age", bank.slot(i).age},
                         {"write_count", bank.write_count(i)},
                         {"key_norm_residual", std::abs(std::sqrt(norm2) - 1.0)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write memory stats: " + path.string());
  out << json{{"capacity", bank.capacity()}, {"occupancy", bank.size()}, {"slots", slots}}.dump(2)
      << "\n";
}

}  // namespace

TrainArtifacts run_training(const Config& config, const std::filesystem::path& corpus_dir,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  LoadedCorpus corpus = load_corpus(corpus_dir, config);
  Model model = build_model(config);

  std::optional<MemoryBank> bank;
  if (config.memory.enabled)
    bank.emplace(config.memory.capacity, config.memory.key_dim, config.corpus.resolution,
                 config.memory.read_threshold, config.memory.write_threshold);

  TrainArtifacts artifacts;
  artifacts.stats = train(config, corpus, model, bank ? &*bank : nullptr);

  artifacts.checkpoint = out_dir / "checkpoint.vmwt";
  ad::save_checkpoint(artifacts.checkpoint, model.parameters());
  if (bank) {
    artifacts.snapshot = out_dir / "memory.vmem";
    bank->save(artifacts.snapshot);
    artifacts.memory_stats = out_dir / "memory_stats.json";
    write_memory_stats(artifacts.memory_stats, *bank);
  }
  artifacts.report = out_dir / "train_report.jsonl";
  write_train_report(artifacts.report, config, artifacts.stats, corpus.manifest_hash);
  return artifacts;
}

LoadedRun load_run(const Config& config, const std::filesystem::path& model_dir) {
  LoadedRun run{build_model(config), std::nullopt};
  auto params = run.model.parameters();
  ad::load_checkpoint(model_dir / "checkpoint.vmwt", params);
  if (config.memory.enabled) {
    const auto snapshot = model_dir / "memory.vmem";
    if (!std::filesystem::exists(snapshot))
      throw ConfigError("memory is enabled but no snapshot found at " + snapshot.string());
    run.bank = MemoryBank::load(snapshot, config.memory.read_threshold,
                                config.memory.write_threshold);
    if (run.bank->key_dim() != config.memory.key_dim)
      throw ConfigError("snapshot key dimension " + std::to_string(run.bank->key_dim()) +
                        " does not match config " + std::to_string(config.memory.key_dim));
    if (run.bank->resolution() != config.corpus.resolution)
      throw ConfigError("snapshot resolution " + std::to_string(run.bank->resolution()) +
                        " does not match config " + std::to_string(config.corpus.resolution));
  }
  return run;
}

// ---- evaluation -----------------------------------------------------------------

Reconstruction reconstruct_one(const Config& config, const Model& model, const MemoryBank* bank,
                               const std::vector<double>& image, std::size_t resolution) {
  ad::Tensor x = ad::Tensor::constant({image.size()}, image);
  ad::Tensor feature = model.encoder->forward(x);
  RetrievedSequence seq;
  if (bank != nullptr && model.memory_enabled) {
    auto fv = feature.values();
    seq = capped(bank->read(std::vector<double>(fv.begin(), fv.end())),
                 config.memory.max_retrieved);
  }
  ad::Tensor prior;
  if (model.memory_enabled) prior = nets::fuse_prior(*model.shape_encoder, seq, model.fusion);
  ad::Tensor predicted = model.decoder->forward(feature, prior);
  return {grid_from_tensor(predicted, resolution), std::move(seq)};
}

EvalResult evaluate(const Config& config, const LoadedCorpus& corpus, const Model& model,
                    const MemoryBank* bank, const std::string& split) {
  config.validate();
  if (config.memory.enabled && bank == nullptr)
    throw ConfigError("evaluate: memory is enabled but no bank snapshot was provided");

  const auto& items = split_of(corpus, split);
  if (items.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
  const double t = config.train.binarize_threshold;

  EvalResult result;
  result.split = split;
  result.mean_fscore.assign(config.eval.fscore_distances.size(), 0.0);
  result.mean_precision.assign(config.eval.fscore_distances.size(), 0.0);
  result.mean_recall.assign(config.eval.fscore_distances.size(), 0.0);

  double sum_iou = 0.0, sum_baseline = 0.0, sum_retrieved = 0.0, sum_rp = 0.0;

  for (const LoadedExample& ex : items) {
    ItemEval item;
    item.id = ex.id;

    Reconstruction rec = reconstruct_one(config, model, bank, ex.image, corpus.resolution);
    item.iou = iou(rec.probabilities, ex.gt, t);
    // Constant-0.5 baseline binarizes to all-occupied at any t < 0.5.
    item.baseline_iou =
        static_cast<double>(ex.gt.occupied_count()) / static_cast<double>(ex.gt.voxel_count());
    item.retrieved_count = rec.retrieved.size();
    item.retrieval_precision =
        retrieval_precision(rec.retrieved, ex.gt, config.memory.write_threshold);

    mesh::TriangleMesh gt_mesh = mesh::marching_cubes(ex.gt, t);
    mesh::TriangleMesh pred_mesh = mesh::marching_cubes(rec.probabilities, t);
    if (pred_mesh.empty() || gt_mesh.empty()) {
      // No surface to score; every distance scores zero.
      item.empty_prediction = true;
      item.scores.assign(config.eval.fscore_distances.size(), mesh::ScoreTriple{});
    } else {
      const std::uint64_t item_seed = mix_seed(config.eval.seed, fnv1a64(std::span(
          reinterpret_cast<const std::uint8_t*>(ex.id.data()), ex.id.size())));
      mesh::SurfaceSample pred_pts =
          mesh::sample_surface(pred_mesh, config.eval.surface_samples, item_seed);
      mesh::SurfaceSample gt_pts =
          mesh::sample_surface(gt_mesh, config.eval.surface_samples, mix_seed(item_seed, 1));
      const mesh::BoundingBox box = mesh::bounding_box(gt_mesh);
      mesh::normalize_points(pred_pts.points, box);
      mesh::normalize_points(gt_pts.points, box);
      for (double d : config.eval.fscore_distances)
        item.scores.push_back(mesh::f_score(pred_pts.points, gt_pts.points, d));
    }

    sum_iou += item.iou;
    sum_baseline += item.baseline_iou;
    sum_retrieved += static_cast<double>(item.retrieved_count);
    if (item.retrieval_precision) {
      sum_rp += *item.retrieval_precision;
      ++result.items_with_retrieval;
    }
    for (std::size_t di = 0; di < item.scores.size(); ++di) {
      result.mean_fscore[di] += item.scores[di].fscore;
      result.mean_precision[di] += item.scores[di].precision;
      result.mean_recall[di] += item.scores[di].recall;
    }
    result.items.push_back(std::move(item));
  }

  const double n = static_cast<double>(items.size());
  result.mean_iou = sum_iou / n;
  result.mean_baseline_iou = sum_baseline / n;
  result.mean_retrieved = sum_retrieved / n;
  for (double& v : result.mean_fscore) v /= n;
  for (double& v : result.mean_precision) v /= n;
  for (double& v : result.mean_recall) v /= n;
  if (result.items_with_retrieval > 0)
    result.mean_retrieval_precision = sum_rp / static_cast<double>(result.items_with_retrieval);
  return result;
}

void write_eval_report(const std::filesystem::path& path, const Config& config,
                       const EvalResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write eval report: " + path.string());
  out << json{{"type", "header"},
              {"split", result.split},
              {"binarize_threshold", config.train.binarize_threshold},
              {"surface_samples", config.eval.surface_samples},
              {"fscore_distances", config.eval.fscore_distances},
              {"normalization", "gt-bbox-longest-side"}}
          .dump()
      << "\n";
  for (const ItemEval& item : result.items) {
    json scores = json::array();
    for (std::size_t di = 0; di < item.scores.size(); ++di)
      scores.push_back(json{{"d", config.eval.fscore_distances[di]},
                            {"precision", item.scores[di].precision},
                            {"recall", item.scores[di].recall},
                            {"fscore", item.scores[di].fscore}});
    json j{{"type", "item"},
           {"id", item.id},
           {"iou", item.iou},
           {"baseline_iou", item.baseline_iou},
           {"scores", scores},
           {"retrieved", item.retrieved_count},
           {"empty_prediction", item.empty_prediction}};
    if (item.retrieval_precision) j["retrieval_precision"] = *item.retrieval_precision;
    out << j.dump() << "\n";
  }
  json summary{{"type", "summary"},
               {"mean_iou", result.mean_iou},
               {"mean_baseline_iou", result.mean_baseline_iou},
               {"mean_fscore", result.mean_fscore},
               {"mean_precision", result.mean_precision},
               {"mean_recall", result.mean_recall},
               {"mean_retrieved", result.mean_retrieved},
               {"items_with_retrieval", result.items_with_retrieval}};
  if (result.mean_retrieval_precision)
    summary["mean_retrieval_precision"] = *result.mean_retrieval_precision;
  out << summary.dump() << "\n";
  out.close();
  if (!out) throw IoError("eval report write failed: " + path.string());
}

// ---- ablation -------------------------------------------------------------------

Config cell_config(const Config& base, const std::string& cell_name) {
  Config c = base;
  if (cell_name == "no_memory") {
    c.memory.enabled = false;
    c.train.triplet_enabled = false;
  } else if (cell_name == "m64") {
    c.memory.capacity = 64;
  } else if (cell_name == "m128") {
    c.memory.capacity = 128;
  } else if (cell_name == "m256") {
    c.memory.capacity = 256;
  } else if (cell_name == "no_triplet") {
    c.train.triplet_enabled = false;
  } else if (cell_name == "average") {
    c.model.fusion = nets::FusionMode::Average;
  } else if (cell_name == "top1") {
    c.model.fusion = nets::FusionMode::Top1;
  } else if (cell_name == "lstm") {
    c.model.fusion = nets::FusionMode::Lstm;
  } else {
    throw ConfigError("unknown ablation cell '" + cell_name + "'");
  }
  return c;
}

std::vector<std::string> default_cells() {
  return {"no_memory", "m64", "m128", "m256", "no_triplet", "average", "top1"};
}

double CellResult::mean_iou_occluded() const {
  double s = 0;
  for (const auto& o : seeds) s += o.iou_occluded;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

double CellResult::sd_iou_occluded() const {
  if (seeds.size() < 2) return 0.0;
  const double mean = mean_iou_occluded();
  double acc = 0;
  for (const auto& o : seeds) acc += (o.iou_occluded - mean) * (o.iou_occluded - mean);
  return std::sqrt(acc / static_cast<double>(seeds.size() - 1));
}

double CellResult::mean_iou_clean() const {
  double s = 0;
  for (const auto& o : seeds) s += o.iou_clean;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

double CellResult::mean_fscore_occluded() const {
  double s = 0;
  for (const auto& o : seeds) s += o.fscore_occluded;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

double CellResult::mean_retrieval_precision() const {
  double s = 0;
  for (const auto& o : seeds) s += o.retrieval_precision;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

AblationResult run_ablation(const Config& base, const std::filesystem::path& corpus_dir,
                            const std::vector<std::string>& cells, std::size_t num_seeds) {
  AblationResult result;

  LoadedCorpus corpus = load_corpus(corpus_dir, base);
  result.corpus_manifest_hash = corpus.manifest_hash;

  for (const std::string& name : cells) {
    CellResult cell;
    cell.name = name;
    try {
      const Config cfg0 = cell_config(base, name);
      for (std::size_t si = 0; si < num_seeds; ++si) {
        Config cfg = cfg0;
        cfg.train.seed = base.train.seed + si;

        Model model = build_model(cfg);
        std::optional<MemoryBank> bank;
        if (cfg.memory.enabled)
          bank.emplace(cfg.memory.capacity, cfg.memory.key_dim, cfg.corpus.resolution,
                       cfg.memory.read_threshold, cfg.memory.write_threshold);

        const auto t0 = std::chrono::steady_clock::now();
        SeedOutcome outcome;
        outcome.seed = cfg.train.seed;
        outcome.train_stats = train(cfg, corpus, model, bank ? &*bank : nullptr);
        outcome.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const MemoryBank* bank_ptr = bank ? &*bank : nullptr;
        EvalResult clean = evaluate(cfg, corpus, model, bank_ptr, "test_clean");
        EvalResult occluded = evaluate(cfg, corpus, model, bank_ptr, "test_occluded");
        outcome.iou_clean = clean.mean_iou;
        outcome.iou_occluded = occluded.mean_iou;
        outcome.fscore_occluded = occluded.mean_fscore.empty() ? 0.0 : occluded.mean_fscore[0];
        outcome.retrieval_precision = occluded.mean_retrieval_precision.value_or(0.0);
        cell.seeds.push_back(std::move(outcome));
      }
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

void write_ablation_report(const std::filesystem::path& json_path,
                           const std::filesystem::path& table_path,
                           const AblationResult& result) {
  json cells = json::array();
  for (const CellResult& cell : result.cells) {
    json seeds = json::array();
    for (const SeedOutcome& o : cell.seeds)
      seeds.push_back(json{{"seed", o.seed},
                           {"iou_clean", o.iou_clean},
                           {"iou_occluded", o.iou_occluded},
                           {"fscore_occluded", o.fscore_occluded},
                           {"retrieval_precision", o.retrieval_precision},
                           {"train_seconds", o.train_seconds}});
    json jc{{"name", cell.name}, {"failed", cell.failed}, {"seeds", seeds}};
    if (cell.failed)
      jc["error"] = cell.error;
    else {
      jc["mean_iou_occluded"] = cell.mean_iou_occluded();
      jc["sd_iou_occluded"] = cell.sd_iou_occluded();
      jc["mean_iou_clean"] = cell.mean_iou_clean();
      jc["mean_fscore_occluded"] = cell.mean_fscore_occluded();
      jc["mean_retrieval_precision"] = cell.mean_retrieval_precision();
    }
    cells.push_back(std::move(jc));
  }
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot write ablation report: " + json_path.string());
  out << json{{"corpus_manifest_hash", result.corpus_manifest_hash}, {"cells", cells}}.dump(2)
      << "\n";
  out.close();

  std::ofstream table(table_path);
  if (!table) throw IoError("cannot write ablation table: " + table_path.string());
  table << "cell          mean_iou_occl  sd       mean_iou_clean  mean_f_occl  retr_prec\n";
  char line[160];
  for (const CellResult& cell : result.cells) {
    if (cell.failed) {
      table << cell.name << "  FAILED: " << cell.error << "\n";
      continue;
    }
    std::snprintf(line, sizeof(line), "%-12s  %13.4f  %7.4f  %14.4f  %11.4f  %9.4f\n",
                  cell.name.c_str(), cell.mean_iou_occluded(), cell.sd_iou_occluded(),
                  cell.mean_iou_clean(), cell.mean_fscore_occluded(),
                  cell.mean_retrieval_precision());
    table << line;
  }
}

}  // namespace voxmem::pipeline
