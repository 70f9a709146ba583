#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxmem/adam.hpp"
#include "voxmem/config.hpp"
#include "voxmem/memory_bank.hpp"
#include "voxmem/mesh.hpp"
#include "voxmem/nets.hpp"

namespace voxmem::pipeline {

struct LoadedExample {
  std::string id;
  std::string shape_id;
  std::vector<double> image;  // flattened c * r_i^2
  VoxelGrid gt;
};

struct LoadedCorpus {
  std::vector<LoadedExample> train;
  std::vector<LoadedExample> test_clean;
  std::vector<LoadedExample> test_occluded;
  std::uint64_t manifest_hash = 0;
  std::size_t image_dim = 0;
  std::size_t resolution = 0;
};

LoadedCorpus load_corpus(const std::filesystem::path& dir, const Config& config);
const std::vector<LoadedExample>& split_of(const LoadedCorpus& corpus, const std::string& split);

// The trainable stack. The shape encoder exists whenever memory is on (the
// reduced fusion modes reuse its input projection).
struct Model {
  std::unique_ptr<nets::EncoderNet> encoder;
  std::unique_ptr<nets::LstmShapeEncoder> shape_encoder;
  std::unique_ptr<nets::DecoderNet> decoder;
  nets::FusionMode fusion = nets::FusionMode::Lstm;
  bool memory_enabled = true;

  std::vector<ad::NamedTensor> parameters() const;
  std::vector<ad::Tensor> parameter_tensors() const;
};

Model build_model(const Config& config);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_triplet = 0.0;
  double mean_bce = 0.0;
  double mean_total = 0.0;  // committed as mean_triplet + mean_bce
  std::size_t bank_size = 0;
  double mean_retrieved = 0.0;
  double mined_fraction = 0.0;
  std::size_t inserts = 0;
  std::size_t updates = 0;
};

struct TrainStats {
  std::vector<EpochStats> epochs;
  std::vector<double> step_totals;  // batch-mean loss per optimizer step
  std::uint64_t steps = 0;
  // Invariant instrumentation: the total-loss ledger and the
  // read-before-write discipline are asserted on every step.
  std::uint64_t ledger_checks = 0;
  std::uint64_t ledger_violations = 0;
  std::uint64_t rbw_checks = 0;
  std::uint64_t rbw_violations = 0;
};

// Runs the training loop, mutating the model parameters and the bank.
// The bank pointer must be non-null iff the config enables memory.
TrainStats train(const Config& config, const LoadedCorpus& corpus, Model& model,
                 MemoryBank* bank);

struct TrainArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path snapshot;  // empty when memory is disabled
  std::filesystem::path report;
  std::filesystem::path memory_stats;
  TrainStats stats;
};

// Full training entry point: loads the corpus, trains, writes the
// checkpoint, memory snapshot, train report and memory stats sidecar.
TrainArtifacts run_training(const Config& config, const std::filesystem::path& corpus_dir,
                            const std::filesystem::path& out_dir);

struct ItemEval {
  std::string id;
  double iou = 0.0;
  double baseline_iou = 0.0;  // constant-0.5 grid baseline
  std::vector<mesh::ScoreTriple> scores;  // one per configured distance
  std::size_t retrieved_count = 0;
  std::optional<double> retrieval_precision;
  bool empty_prediction = false;
};

struct EvalResult {
  std::string split;
  std::vector<ItemEval> items;
  double mean_iou = 0.0;
  double mean_baseline_iou = 0.0;
  std::vector<double> mean_fscore;
  std::vector<double> mean_precision;
  std::vector<double> mean_recall;
  double mean_retrieved = 0.0;
  std::size_t items_with_retrieval = 0;
  std::optional<double> mean_retrieval_precision;  // over items with retrievals
};

// Single-image reconstruction outside any tape (pure inference).
struct Reconstruction {
  VoxelGrid probabilities;
  RetrievedSequence retrieved;
};
Reconstruction reconstruct_one(const Config& config, const Model& model, const MemoryBank* bank,
                               const std::vector<double>& image, std::size_t resolution);

// Pure evaluation: reconstruct every item of the split, score IoU and
// surface F-scores, never touching the bank.
EvalResult evaluate(const Config& config, const LoadedCorpus& corpus, const Model& model,
                    const MemoryBank* bank, const std::string& split);

void write_eval_report(const std::filesystem::path& path, const Config& config,
                       const EvalResult& result);

// Loads a trained model (and bank when enabled) from a training output
// directory.
struct LoadedRun {
  Model model;
  std::optional<MemoryBank> bank;
};
LoadedRun load_run(const Config& config, const std::filesystem::path& model_dir);

// ---- ablation ---------------------------------------------------------------

// Named configuration deltas used by the ablation matrix.
Config cell_config(const Config& base, const std::string& cell_name);
std::vector<std::string> default_cells();

struct SeedOutcome {
  std::uint64_t seed = 0;
  double iou_clean = 0.0;
  double iou_occluded = 0.0;
  double fscore_occluded = 0.0;  // at the first configured distance
  double retrieval_precision = 0.0;
  double train_seconds = 0.0;
  TrainStats train_stats;
};

struct CellResult {
  std::string name;
  std::vector<SeedOutcome> seeds;
  bool failed = false;
  std::string error;

  double mean_iou_occluded() const;
  double sd_iou_occluded() const;
  double mean_iou_clean() const;
  double mean_fscore_occluded() const;
  double mean_retrieval_precision() const;
};

struct AblationResult {
  std::uint64_t corpus_manifest_hash = 0;
  std::vector<CellResult> cells;
};

// Trains and evaluates every cell over `num_seeds` seeds (train.seed + i) on
// a shared corpus. Cell failures are recorded and the run continues.
AblationResult run_ablation(const Config& base, const std::filesystem::path& corpus_dir,
                            const std::vector<std::string>& cells, std::size_t num_seeds);

void write_ablation_report(const std::filesystem::path& json_path,
                           const std::filesystem::path& table_path, const AblationResult& result);

}  // namespace voxmem::pipeline
