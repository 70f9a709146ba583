#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxmem/nets.hpp"
#include "voxmem/synthdata.hpp"

namespace voxmem::pipeline {

// All knobs of the pipeline, grouped the way the config file sections are.
// Defaults are the desk-scale configuration; full-scale reference values are
// listed in the README table.
struct Config {
  struct Corpus {
    std::size_t train_count = 500;
    std::size_t test_count = 100;
    std::size_t resolution = 16;  // r_v
    std::size_t image_size = 32;  // r_i
    std::uint64_t seed = 7;
    double max_train_similarity = 0.895;
    std::size_t variants_max = 4;
    double occlusion_train_max = 0.45;
    double clutter_train_max = 0.30;
    double occlusion_test = 0.45;
    double clutter_test = 0.35;
  } corpus;

  struct Memory {
    bool enabled = true;
    std::size_t capacity = 256;     // m
    std::size_t key_dim = 128;      // n_k
    double read_threshold = 0.85;   // beta
    double write_threshold = 0.90;  // delta
    std::size_t max_retrieved = 8;  // retrieval cap fed to fusion; 0 = unlimited
  } memory;

  struct Model {
    std::size_t embed_dim = 64;   // n_e
    std::size_t hidden_dim = 128;  // n_h
    std::size_t encoder_hidden = 256;
    std::size_t decoder_hidden = 512;
    nets::FusionMode fusion = nets::FusionMode::Lstm;
  } model;

  struct Train {
    std::size_t epochs = 40;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::size_t lr_halve_epoch = 30;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    bool triplet_enabled = true;
    double margin = 0.1;              // alpha
    double binarize_threshold = 0.3;  // t
    std::uint64_t seed = 1;
    bool write_before_step = false;   // memory writes after the Adam step by default
    // Re-render train images so the encoder sees several degraded views of
    // each shape instead of one frozen render. Each example cycles through a
    // fixed set of `views` corruption draws; recurring views let the memory
    // writer re-match a shape's slot across epochs, which pure per-epoch
    // randomization would prevent.
    bool augment = true;
    std::size_t views = 6;
  } train;

  struct Eval {
    std::vector<double> fscore_distances = {0.01};
    std::size_t surface_samples = 8192;
    std::uint64_t seed = 9001;
  } eval;

  void validate() const;

  synth::CorpusConfig corpus_config() const;
};

Config default_config();

// Plain-text key=value file with [section] headers; '#' starts a comment.
// Unknown sections or keys are errors (with the line number).
Config load_config(const std::filesystem::path& path);

// Parses one "section.key=value" override on top of an existing config.
void apply_override(Config& config, const std::string& assignment);

}  // namespace voxmem::pipeline
