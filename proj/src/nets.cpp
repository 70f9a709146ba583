#include "voxmem/nets.hpp"

#include <cmath>

namespace voxmem::nets {

namespace {

ad::Tensor init_weight(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<double> data(out_dim * in_dim);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return ad::Tensor::variable({out_dim, in_dim}, std::move(data));
}

}  // namespace

DenseLayer::DenseLayer(std::size_t out_dim, std::size_t in_dim, Rng& rng)
    : weight(init_weight(out_dim, in_dim, rng)),
      bias(ad::Tensor::variable({out_dim}, std::vector<double>(out_dim, 0.0))) {}

ad::Tensor DenseLayer::forward(const ad::Tensor& x) const {
  return ad::add(ad::matmul(weight, x), bias);
}

void DenseLayer::collect(const std::string& prefix, std::vector<ad::NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---- EncoderNet -------------------------------------------------------------

EncoderNet::EncoderNet(std::size_t input_dim, std::size_t hidden_dim, std::size_t feature_dim,
                       Rng& rng)
    : input_dim_(input_dim),
      feature_dim_(feature_dim),
      l1_(hidden_dim, input_dim, rng),
      l2_(feature_dim, hidden_dim, rng) {}

ad::Tensor EncoderNet::forward(const ad::Tensor& image) const {
  if (image.size() != input_dim_)
    throw DimensionError("encoder: image has " + std::to_string(image.size()) +
                         " values, expected " + std::to_string(input_dim_));
  return l2_.forward(ad::relu(l1_.forward(image)));
}

void EncoderNet::collect_parameters(std::vector<ad::NamedTensor>& out) const {
  l1_.collect("enc.l1", out);
  l2_.collect("enc.l2", out);
}

// ---- LstmShapeEncoder --------------------------------------------------------

LstmShapeEncoder::LstmShapeEncoder(std::size_t value_dim, std::size_t embed_dim,
                                   std::size_t hidden_dim, Rng& rng)
    : value_dim_(value_dim),
      embed_dim_(embed_dim),
      hidden_dim_(hidden_dim),
      proj_(embed_dim, value_dim, rng),
      gate_i_(hidden_dim, embed_dim + hidden_dim, rng),
      gate_f_(hidden_dim, embed_dim + hidden_dim, rng),
      gate_o_(hidden_dim, embed_dim + hidden_dim, rng),
      gate_g_(hidden_dim, embed_dim + hidden_dim, rng) {}

ad::Tensor LstmShapeEncoder::project(const ad::Tensor& value) const {
  if (value.size() != value_dim_)
    throw DimensionError("shape encoder: value has " + std::to_string(value.size()) +
                         " voxels, expected " + std::to_string(value_dim_));
  return proj_.forward(value);
}

LstmShapeEncoder::State LstmShapeEncoder::zero_state() const {
  return {ad::Tensor::zeros({hidden_dim_}), ad::Tensor::zeros({hidden_dim_})};
}

LstmShapeEncoder::State LstmShapeEncoder::step(const ad::Tensor& x, const State& state) const {
  if (x.size() != embed_dim_ || state.h.size() != hidden_dim_ || state.c.size() != hidden_dim_)
    throw DimensionError("lstm step: dimension mismatch");
  ad::Tensor xh = ad::concat(x, state.h);
  ad::Tensor i = ad::sigmoid(gate_i_.forward(xh));
  ad::Tensor f = ad::sigmoid(gate_f_.forward(xh));
  ad::Tensor o = ad::sigmoid(gate_o_.forward(xh));
  ad::Tensor g = ad::tanh(gate_g_.forward(xh));
  ad::Tensor c = ad::add(ad::mul(f, state.c), ad::mul(i, g));
  ad::Tensor h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

ad::Tensor LstmShapeEncoder::encode(const RetrievedSequence& seq) const {
  State state = zero_state();
  // Ascending similarity: the most similar volume is the last input and
  // dominates the final hidden state.
  for (auto it = seq.rbegin(); it != seq.rend(); ++it)
    state = step(project(grid_to_tensor(*it->value)), state);
  return state.h;
}

void LstmShapeEncoder::collect_parameters(std::vector<ad::NamedTensor>& out) const {
  proj_.collect("shp.proj", out);
  gate_i_.collect("shp.gate_i", out);
  gate_f_.collect("shp.gate_f", out);
  gate_o_.collect("shp.gate_o", out);
  gate_g_.collect("shp.gate_g", out);
}

// ---- DecoderNet --------------------------------------------------------------

DecoderNet::DecoderNet(std::size_t feature_dim, std::size_t prior_dim, std::size_t hidden_dim,
                       std::size_t voxel_count, Rng& rng)
    : feature_dim_(feature_dim),
      prior_dim_(prior_dim),
      voxel_count_(voxel_count),
      l1_(hidden_dim, feature_dim + prior_dim, rng),
      l2_(voxel_count, hidden_dim, rng) {}

ad::Tensor DecoderNet::forward(const ad::Tensor& feature, const ad::Tensor& prior) const {
  if (feature.size() != feature_dim_)
    throw DimensionError("decoder: feature has " + std::to_string(feature.size()) +
                         " values, expected " + std::to_string(feature_dim_));
  ad::Tensor x = feature;
  if (prior_dim_ > 0) {
    if (!prior.defined() || prior.size() != prior_dim_)
      throw DimensionError("decoder: prior dimension mismatch, expected " +
                           std::to_string(prior_dim_));
    x = ad::concat(feature, prior);
  }
  return ad::sigmoid(l2_.forward(ad::relu(l1_.forward(x))));
}

void DecoderNet::collect_parameters(std::vector<ad::NamedTensor>& out) const {
  l1_.collect("dec.l1", out);
  l2_.collect("dec.l2", out);
}

// ---- fusion ------------------------------------------------------------------

FusionMode fusion_from_string(const std::string& s) {
  if (s == "lstm") return FusionMode::Lstm;
  if (s == "average") return FusionMode::Average;
  if (s == "top1") return FusionMode::Top1;
  throw ConfigError("unknown fusion mode '" + s + "' (expected lstm|average|top1)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Lstm: return "lstm";
    case FusionMode::Average: return "average";
    case FusionMode::Top1: return "top1";
  }
  return "lstm";
}

std::size_t prior_dim_for(FusionMode mode, std::size_t embed_dim, std::size_t hidden_dim) {
  return mode == FusionMode::Lstm ? hidden_dim : embed_dim;
}

ad::Tensor fuse_prior(const LstmShapeEncoder& encoder, const RetrievedSequence& seq,
                      FusionMode mode) {
  switch (mode) {
    case FusionMode::Lstm:
      return encoder.encode(seq);
    case FusionMode::Average: {
      if (seq.empty()) return ad::Tensor::zeros({encoder.embed_dim()});
      ad::Tensor acc = encoder.project(grid_to_tensor(*seq[0].value));
      for (std::size_t i = 1; i < seq.size(); ++i)
        acc = ad::add(acc, encoder.project(grid_to_tensor(*seq[i].value)));
      return ad::affine(acc, 1.0 / static_cast<double>(seq.size()), 0.0);
    }
    case FusionMode::Top1:
      if (seq.empty()) return ad::Tensor::zeros({encoder.embed_dim()});
      return encoder.project(grid_to_tensor(*seq.front().value));
  }
  throw ContractError("fuse_prior: unreachable");
}

// ---- losses ------------------------------------------------------------------

ad::Tensor triplet_loss(const ad::Tensor& s_kb, const ad::Tensor& s_kp, double margin) {
  if (s_kb.size() != 1 || s_kp.size() != 1)
    throw DimensionError("triplet_loss: similarities must be scalars");
  // max(s_kb - s_kp + margin, 0)
  return ad::relu(ad::affine(ad::add(s_kb, ad::affine(s_kp, -1.0, 0.0)), 1.0, margin));
}

std::pair<ad::Tensor, ad::Tensor> triplet_terms(const ad::Tensor& feature,
                                                const MinedTriplet& mined) {
  ad::Tensor pos_key = ad::Tensor::constant({mined.positive_key.size()}, mined.positive_key);
  ad::Tensor neg_key = ad::Tensor::constant({mined.negative_key.size()}, mined.negative_key);
  return {ad::cosine_similarity(feature, pos_key), ad::cosine_similarity(feature, neg_key)};
}

ad::Tensor total_loss(const ad::Tensor& triplet, const ad::Tensor& reconstruction) {
  return ad::add(triplet, reconstruction);
}

}  // namespace voxmem::nets
