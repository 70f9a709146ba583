#include "voxmem/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxmem/binio.hpp"
#include "voxmem/pipeline.hpp"

namespace voxmem {

namespace {

using pipeline::Config;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file with [section] headers");
  cmd->add_option("--set", opts.overrides,
                  "override a config value as section.key=value (repeatable)");
}

Config resolve_config(const CommonOpts& opts) {
  Config config =
      opts.config_path.empty() ? pipeline::default_config() : pipeline::load_config(opts.config_path);
  for (const std::string& assignment : opts.overrides) pipeline::apply_override(config, assignment);
  config.validate();
  return config;
}

std::vector<double> image_as_input(const synth::Image& img) {
  return std::vector<double>(img.data.begin(), img.data.end());
}

void cmd_gen_data(const CommonOpts& opts, const std::string& out_dir) {
  const Config config = resolve_config(opts);
  synth::build_corpus(config.corpus_config(), out_dir);
  std::cout << "corpus written to " << out_dir << " (manifest hash "
            << fnv1a64_file(std::filesystem::path(out_dir) / "manifest.jsonl") << ")\n";
}

void cmd_train(const CommonOpts& opts, const std::string& corpus_dir, const std::string& out_dir) {
  const Config config = resolve_config(opts);
  const auto artifacts = pipeline::run_training(config, corpus_dir, out_dir);
  const auto& last = artifacts.stats.epochs.back();
  std::cout << "trained " << config.train.epochs << " epochs, " << artifacts.stats.steps
            << " steps; final loss " << last.mean_total << " (triplet " << last.mean_triplet
            << ", bce " << last.mean_bce << ")\n";
  std::cout << "checkpoint: " << artifacts.checkpoint.string() << "\n";
  if (!artifacts.snapshot.empty()) std::cout << "memory:     " << artifacts.snapshot.string() << "\n";
  std::cout << "report:     " << artifacts.report.string() << "\n";
}

void cmd_eval(const CommonOpts& opts, const std::string& corpus_dir, const std::string& model_dir,
              const std::string& split, std::string out_path) {
  const Config config = resolve_config(opts);
  pipeline::LoadedRun run = pipeline::load_run(config, model_dir);
  pipeline::LoadedCorpus corpus = pipeline::load_corpus(corpus_dir, config);
  const MemoryBank* bank = run.bank ? &*run.bank : nullptr;

  std::uint64_t snapshot_hash_before = 0;
  const auto snapshot_path = std::filesystem::path(model_dir) / "memory.vmem";
  if (bank != nullptr) snapshot_hash_before = fnv1a64_file(snapshot_path);

  pipeline::EvalResult result = pipeline::evaluate(config, corpus, run.model, bank, split);
  if (out_path.empty())
    out_path = (std::filesystem::path(model_dir) / ("eval_" + split + ".jsonl")).string();
  pipeline::write_eval_report(out_path, config, result);

  if (bank != nullptr && fnv1a64_file(snapshot_path) != snapshot_hash_before)
    throw ContractError("eval: memory snapshot changed during evaluation");

  std::cout << "split " << split << ": mean IoU " << result.mean_iou << " (baseline "
            << result.mean_baseline_iou << ")";
  for (std::size_t i = 0; i < result.mean_fscore.size(); ++i)
    std::cout << ", F@" << config.eval.fscore_distances[i] << " " << result.mean_fscore[i];
  std::cout << "\nreport: " << out_path << "\n";
}

void cmd_reconstruct(const CommonOpts& opts, const std::string& model_dir,
                     const std::string& image_path, const std::string& out_path,
                     const std::string& mesh_path) {
  const Config config = resolve_config(opts);
  pipeline::LoadedRun run = pipeline::load_run(config, model_dir);

  const synth::Image img = synth::load_imgf(image_path);
  const std::size_t expected = 3 * config.corpus.image_size * config.corpus.image_size;
  if (img.channels * img.height * img.width != expected)
    throw DimensionError("reconstruct: image has " +
                         std::to_string(img.channels * img.height * img.width) +
                         " values, config expects " + std::to_string(expected));

  pipeline::Reconstruction rec =
      pipeline::reconstruct_one(config, run.model, run.bank ? &*run.bank : nullptr,
                                image_as_input(img), config.corpus.resolution);
  if (config.memory.enabled && rec.retrieved.empty())
    std::cerr << "warning: no memory slot cleared the read threshold; using the zero prior\n";

  save_voxf(out_path, rec.probabilities);
  std::cout << "wrote " << out_path << " (retrieved " << rec.retrieved.size() << " shapes)\n";

  if (!mesh_path.empty()) {
    mesh::TriangleMesh m =
        mesh::marching_cubes(rec.probabilities, config.train.binarize_threshold);
    if (m.empty())
      throw EmptySurfaceError("reconstruct: prediction has no surface at iso " +
                              std::to_string(config.train.binarize_threshold));
    mesh::write_obj(mesh_path, m);
    std::cout << "wrote " << mesh_path << " (" << m.triangles.size() << " triangles)\n";
  }
}

void cmd_mem_inspect(const CommonOpts& opts, const std::string& snapshot_path,
                     const std::string& stats_path) {
  const Config config = resolve_config(opts);
  MemoryBank bank = MemoryBank::load(snapshot_path, config.memory.read_threshold,
                                     config.memory.write_threshold);
  std::cout << "capacity " << bank.capacity() << "\n";
  std::cout << "occupancy " << bank.size() << "\n";
  std::cout << "key_dim " << bank.key_dim() << "\n";
  std::cout << "resolution " << bank.resolution() << "\n";
  if (bank.empty()) return;

  std::uint64_t age_min = ~0ULL, age_max = 0;
  double age_sum = 0.0, worst_residual = 0.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const MemorySlot& s = bank.slot(i);
    age_min = std::min(age_min, s.age);
    age_max = std::max(age_max, s.age);
    age_sum += static_cast<double>(s.age);
    double norm2 = 0.0;
    for (double x : s.key) norm2 += x * x;
    worst_residual = std::max(worst_residual, std::abs(std::sqrt(norm2) - 1.0));
  }
  std::printf("ages min %llu mean %.2f max %llu\n", static_cast<unsigned long long>(age_min),
              age_sum / static_cast<double>(bank.size()),
              static_cast<unsigned long long>(age_max));
  std::printf("key_norm_residual_max %.3e\n", worst_residual);

  // Pairwise value-similarity histogram over all stored pairs.
  std::array<std::size_t, 10> histogram{};
  for (std::size_t i = 0; i < bank.size(); ++i)
    for (std::size_t j = i + 1; j < bank.size(); ++j) {
      const double s = value_similarity(bank.slot(i).value, bank.slot(j).value);
      const auto bin = static_cast<std::size_t>(std::min(9.0, std::max(0.0, s * 10.0)));
      ++histogram[bin];
    }
  std::cout << "value_similarity_histogram";
  for (std::size_t b = 0; b < histogram.size(); ++b)
    std::printf(" [%.1f,%.1f):%zu", static_cast<double>(b) / 10.0,
                static_cast<double>(b + 1) / 10.0, histogram[b]);
  std::cout << "\n";

  if (!stats_path.empty()) {
    std::ifstream in(stats_path);
    if (!in) throw IoError("cannot open stats file: " + stats_path);
    const auto stats = nlohmann::json::parse(in, nullptr, true);
    std::uint64_t total = 0, max_count = 0;
    for (const auto& slot : stats.at("slots")) {
      const auto c = slot.at("write_count").get<std::uint64_t>();
      total += c;
      max_count = std::max(max_count, c);
    }
    std::printf("write_counts total %llu max_per_slot %llu (from %s)\n",
                static_cast<unsigned long long>(total),
                static_cast<unsigned long long>(max_count), stats_path.c_str());
  } else {
    std::cout << "write_counts unavailable (pass --stats memory_stats.json from training)\n";
  }
}

void cmd_export_mesh(const CommonOpts& opts, const std::string& vox_path,
                     const std::string& out_path, double iso_override) {
  const Config config = resolve_config(opts);
  const double iso = iso_override > 0.0 ? iso_override : config.train.binarize_threshold;

  // Sniff the magic to accept both probability and binary grids.
  char magic[4] = {};
  {
    std::ifstream in(vox_path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + vox_path);
    in.read(magic, 4);
  }
  VoxelGrid grid = std::string_view(magic, 4) == "VOXB" ? load_voxb(vox_path)
                                                        : load_voxf(vox_path);
  mesh::TriangleMesh m = mesh::marching_cubes(grid, iso);
  if (m.empty())
    throw EmptySurfaceError("export-mesh: no surface at iso " + std::to_string(iso));
  mesh::write_obj(out_path, m);
  std::cout << "wrote " << out_path << " (" << m.vertices.size() << " vertices, "
            << m.triangles.size() << " triangles)\n";
}

void cmd_ablate(const CommonOpts& opts, const std::string& corpus_dir, const std::string& out_dir,
                std::vector<std::string> cells, std::size_t seeds) {
  const Config config = resolve_config(opts);
  if (cells.empty()) cells = pipeline::default_cells();
  std::filesystem::create_directories(out_dir);
  pipeline::AblationResult result = pipeline::run_ablation(config, corpus_dir, cells, seeds);
  const auto json_path = std::filesystem::path(out_dir) / "ablation_report.json";
  const auto table_path = std::filesystem::path(out_dir) / "ablation_table.txt";
  pipeline::write_ablation_report(json_path, table_path, result);

  std::ifstream table(table_path);
  std::cout << table.rdbuf();
  std::cout << "report: " << json_path.string() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"memory-augmented single-view voxel reconstruction"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string corpus_dir, out_dir, model_dir, split = "test_occluded", out_path;
  std::string image_path, mesh_path, snapshot_path, stats_path, vox_path;
  std::vector<std::string> cells;
  std::size_t seeds = 3;
  double iso = 0.0;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, opts);
  gen->add_option("--out", out_dir, "corpus output directory")->required();
  gen->callback([&]() { cmd_gen_data(opts, out_dir); });

  CLI::App* train = app.add_subcommand("train", "train a model on a corpus");
  add_common(train, opts);
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("--out", out_dir, "output directory for checkpoint/snapshot/report")
      ->required();
  train->callback([&]() { cmd_train(opts, corpus_dir, out_dir); });

  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained model on a split");
  add_common(eval, opts);
  eval->add_option("--corpus", corpus_dir, "corpus directory")->required();
  eval->add_option("--model", model_dir, "training output directory")->required();
  eval->add_option("--split", split, "train | test_clean | test_occluded");
  eval->add_option("--out", out_path, "report path (default: <model>/eval_<split>.jsonl)");
  eval->callback([&]() { cmd_eval(opts, corpus_dir, model_dir, split, out_path); });

  CLI::App* rec = app.add_subcommand("reconstruct", "reconstruct one image file");
  add_common(rec, opts);
  rec->add_option("--model", model_dir, "training output directory")->required();
  rec->add_option("--image", image_path, "IMGF image file")->required();
  rec->add_option("--out", out_path, "VOXF output path")->required();
  rec->add_option("--mesh", mesh_path, "optional OBJ output path");
  rec->callback([&]() { cmd_reconstruct(opts, model_dir, image_path, out_path, mesh_path); });

  CLI::App* mem = app.add_subcommand("mem-inspect", "dump memory snapshot statistics");
  add_common(mem, opts);
  mem->add_option("--snapshot", snapshot_path, "VMEM snapshot path")->required();
  mem->add_option("--stats", stats_path, "memory_stats.json written by train");
  mem->callback([&]() { cmd_mem_inspect(opts, snapshot_path, stats_path); });

  CLI::App* exp = app.add_subcommand("export-mesh", "extract an OBJ surface from a voxel file");
  add_common(exp, opts);
  exp->add_option("--vox", vox_path, "VOXB or VOXF input")->required();
  exp->add_option("--out", out_path, "OBJ output path")->required();
  exp->add_option("--iso", iso, "iso level (default: train.binarize_threshold)");
  exp->callback([&]() { cmd_export_mesh(opts, vox_path, out_path, iso); });

  CLI::App* abl = app.add_subcommand("ablate", "train and score the ablation matrix");
  add_common(abl, opts);
  abl->add_option("--corpus", corpus_dir, "corpus directory")->required();
  abl->add_option("--out", out_dir, "output directory for the reports")->required();
  abl->add_option("--cells", cells, "cells to run (default: the full matrix)");
  abl->add_option("--seeds", seeds, "seeds per cell");
  abl->callback([&]() { cmd_ablate(opts, corpus_dir, out_dir, cells, seeds); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace voxmem
