#include "voxmem/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace voxmem::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return out;
}

std::size_t parse_size(const std::string& v) {
  const long long out = std::stoll(v);
  if (out < 0) throw std::invalid_argument(v);
  return static_cast<std::size_t>(out);
}

std::uint64_t parse_u64(const std::string& v) { return std::stoull(v); }

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(v);
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(item));
  }
  if (out.empty()) throw std::invalid_argument(v);
  return out;
}

using Setter = std::function<void(Config&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"corpus.train_count", [](Config& c, const std::string& v) { c.corpus.train_count = parse_size(v); }},
      {"corpus.test_count", [](Config& c, const std::string& v) { c.corpus.test_count = parse_size(v); }},
      {"corpus.resolution", [](Config& c, const std::string& v) { c.corpus.resolution = parse_size(v); }},
      {"corpus.image_size", [](Config& c, const std::string& v) { c.corpus.image_size = parse_size(v); }},
      {"corpus.seed", [](Config& c, const std::string& v) { c.corpus.seed = parse_u64(v); }},
      {"corpus.max_train_similarity", [](Config& c, const std::string& v) { c.corpus.max_train_similarity = parse_double(v); }},
      {"corpus.variants_max", [](Config& c, const std::string& v) { c.corpus.variants_max = parse_size(v); }},
      {"corpus.occlusion_train_max", [](Config& c, const std::string& v) { c.corpus.occlusion_train_max = parse_double(v); }},
      {"corpus.clutter_train_max", [](Config& c, const std::string& v) { c.corpus.clutter_train_max = parse_double(v); }},
      {"corpus.occlusion_test", [](Config& c, const std::string& v) { c.corpus.occlusion_test = parse_double(v); }},
      {"corpus.clutter_test", [](Config& c, const std::string& v) { c.corpus.clutter_test = parse_double(v); }},
      {"memory.enabled", [](Config& c, const std::string& v) { c.memory.enabled = parse_bool(v); }},
      {"memory.capacity", [](Config& c, const std::string& v) { c.memory.capacity = parse_size(v); }},
      {"memory.key_dim", [](Config& c, const std::string& v) { c.memory.key_dim = parse_size(v); }},
      {"memory.read_threshold", [](Config& c, const std::string& v) { c.memory.read_threshold = parse_double(v); }},
      {"memory.write_threshold", [](Config& c, const std::string& v) { c.memory.write_threshold = parse_double(v); }},
      {"memory.max_retrieved", [](Config& c, const std::string& v) { c.memory.max_retrieved = parse_size(v); }},
      {"model.embed_dim", [](Config& c, const std::string& v) { c.model.embed_dim = parse_size(v); }},
      {"model.hidden_dim", [](Config& c, const std::string& v) { c.model.hidden_dim = parse_size(v); }},
      {"model.encoder_hidden", [](Config& c, const std::string& v) { c.model.encoder_hidden = parse_size(v); }},
      {"model.decoder_hidden", [](Config& c, const std::string& v) { c.model.decoder_hidden = parse_size(v); }},
      {"model.fusion", [](Config& c, const std::string& v) { c.model.fusion = nets::fusion_from_string(v); }},
      {"train.epochs", [](Config& c, const std::string& v) { c.train.epochs = parse_size(v); }},
      {"train.batch_size", [](Config& c, const std::string& v) { c.train.batch_size = parse_size(v); }},
      {"train.lr", [](Config& c, const std::string& v) { c.train.lr = parse_double(v); }},
      {"train.lr_halve_epoch", [](Config& c, const std::string& v) { c.train.lr_halve_epoch = parse_size(v); }},
      {"train.adam_beta1", [](Config& c, const std::string& v) { c.train.adam_beta1 = parse_double(v); }},
      {"train.adam_beta2", [](Config& c, const std::string& v) { c.train.adam_beta2 = parse_double(v); }},
      {"train.adam_epsilon", [](Config& c, const std::string& v) { c.train.adam_epsilon = parse_double(v); }},
      {"train.triplet_enabled", [](Config& c, const std::string& v) { c.train.triplet_enabled = parse_bool(v); }},
      {"train.margin", [](Config& c, const std::string& v) { c.train.margin = parse_double(v); }},
      {"train.binarize_threshold", [](Config& c, const std::string& v) { c.train.binarize_threshold = parse_double(v); }},
      {"train.seed", [](Config& c, const std::string& v) { c.train.seed = parse_u64(v); }},
      {"train.write_before_step", [](Config& c, const std::string& v) { c.train.write_before_step = parse_bool(v); }},
      {"train.augment", [](Config& c, const std::string& v) { c.train.augment = parse_bool(v); }},
      {"train.views", [](Config& c, const std::string& v) { c.train.views = parse_size(v); }},
      {"eval.fscore_distances", [](Config& c, const std::string& v) { c.eval.fscore_distances = parse_double_list(v); }},
      {"eval.surface_samples", [](Config& c, const std::string& v) { c.eval.surface_samples = parse_size(v); }},
      {"eval.seed", [](Config& c, const std::string& v) { c.eval.seed = parse_u64(v); }},
  };
  return table;
}

void assign(Config& config, const std::string& key, const std::string& value,
            const std::string& where) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError(where + ": unknown key '" + key + "'");
  try {
    it->second(config, value);
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(where + ": bad value '" + value + "' for key '" + key + "'");
  }
}

void check_unit_interval(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0))
    throw ConfigError(std::string(name) + " must lie in (0,1), got " + std::to_string(v));
}

}  // namespace

void Config::validate() const {
  check_unit_interval(memory.read_threshold, "memory.read_threshold");
  check_unit_interval(memory.write_threshold, "memory.write_threshold");
  check_unit_interval(train.binarize_threshold, "train.binarize_threshold");
  if (corpus.train_count == 0 || corpus.test_count == 0)
    throw ConfigError("corpus counts must be positive");
  if (corpus.resolution == 0 || corpus.image_size == 0)
    throw ConfigError("corpus resolution and image size must be positive");
  if (memory.capacity == 0 || memory.key_dim == 0)
    throw ConfigError("memory capacity and key_dim must be positive");
  if (model.embed_dim == 0 || model.hidden_dim == 0 || model.encoder_hidden == 0 ||
      model.decoder_hidden == 0)
    throw ConfigError("model dimensions must be positive");
  if (train.epochs == 0 || train.batch_size == 0) throw ConfigError("train counts must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(train.margin >= 0.0)) throw ConfigError("train.margin must be non-negative");
  if (eval.surface_samples == 0) throw ConfigError("eval.surface_samples must be positive");
  for (double d : eval.fscore_distances)
    if (!(d > 0.0)) throw ConfigError("eval.fscore_distances must be positive");
  if (!(corpus.occlusion_train_max >= 0.0 && corpus.occlusion_train_max <= 0.6) ||
      !(corpus.occlusion_test >= 0.0 && corpus.occlusion_test <= 0.6))
    throw ConfigError("occlusion fractions must lie in [0, 0.6]");
  if (!(corpus.clutter_train_max >= 0.0 && corpus.clutter_train_max <= 0.5) ||
      !(corpus.clutter_test >= 0.0 && corpus.clutter_test <= 0.5))
    throw ConfigError("clutter densities must lie in [0, 0.5]");
}

synth::CorpusConfig Config::corpus_config() const {
  synth::CorpusConfig c;
  c.train_count = corpus.train_count;
  c.test_count = corpus.test_count;
  c.resolution = corpus.resolution;
  c.image_size = corpus.image_size;
  c.seed = corpus.seed;
  c.near_duplicate_threshold = memory.write_threshold;
  c.max_train_similarity = corpus.max_train_similarity;
  c.variants_max = corpus.variants_max;
  c.occlusion_train_max = corpus.occlusion_train_max;
  c.clutter_train_max = corpus.clutter_train_max;
  c.occlusion_test = corpus.occlusion_test;
  c.clutter_test = corpus.clutter_test;
  return c;
}

Config default_config() { return Config{}; }

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  Config config;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key outside any [section]");
    assign(config, section + "." + key, value, where);
  }
  config.validate();
  return config;
}

void apply_override(Config& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  assign(config, key, value, "override");
}

}  // namespace voxmem::pipeline
