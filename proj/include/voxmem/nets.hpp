#pragma once

#include <string>
#include <utility>
#include <vector>

#include "voxmem/checkpoint.hpp"
#include "voxmem/memory_bank.hpp"
#include "voxmem/rng.hpp"
#include "voxmem/tensor.hpp"
#include "voxmem/voxel.hpp"

namespace voxmem::nets {

// Dense layer y = Wx + b with fan-in uniform init (weights in
// [-1/sqrt(in), +1/sqrt(in)], biases zero).
struct DenseLayer {
  ad::Tensor weight;  // out x in
  ad::Tensor bias;    // out

  DenseLayer(std::size_t out_dim, std::size_t in_dim, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, std::vector<ad::NamedTensor>& out) const;
};

// Image feature extractor: flattened image -> dense(relu) -> feature vector.
class EncoderNet {
 public:
  EncoderNet(std::size_t input_dim, std::size_t hidden_dim, std::size_t feature_dim, Rng& rng);

  ad::Tensor forward(const ad::Tensor& image) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t feature_dim() const { return feature_dim_; }
  void collect_parameters(std::vector<ad::NamedTensor>& out) const;

 private:
  std::size_t input_dim_;
  std::size_t feature_dim_;
  DenseLayer l1_;
  DenseLayer l2_;
};

// Encodes a retrieved volume sequence into a fixed-length prior vector:
// each volume is linearly projected to an embedding and run through a
// single LSTM layer from a zero initial state, least similar volume first so
// the most similar one dominates the final hidden state.
class LstmShapeEncoder {
 public:
  LstmShapeEncoder(std::size_t value_dim, std::size_t embed_dim, std::size_t hidden_dim, Rng& rng);

  struct State {
    ad::Tensor h;
    ad::Tensor c;
  };

  ad::Tensor project(const ad::Tensor& value) const;
  State step(const ad::Tensor& x, const State& state) const;
  State zero_state() const;

  // Empty sequences encode to the zero vector.
  ad::Tensor encode(const RetrievedSequence& seq) const;

  std::size_t value_dim() const { return value_dim_; }
  std::size_t embed_dim() const { return embed_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  void collect_parameters(std::vector<ad::NamedTensor>& out) const;

 private:
  std::size_t value_dim_;
  std::size_t embed_dim_;
  std::size_t hidden_dim_;
  DenseLayer proj_;
  DenseLayer gate_i_;
  DenseLayer gate_f_;
  DenseLayer gate_o_;
  DenseLayer gate_g_;
};

// Occupancy decoder: concat(feature, prior) -> dense(relu) -> dense ->
// sigmoid. Built without a prior input when prior_dim is 0 (memory-free
// baseline).
class DecoderNet {
 public:
  DecoderNet(std::size_t feature_dim, std::size_t prior_dim, std::size_t hidden_dim,
             std::size_t voxel_count, Rng& rng);

  // `prior` is ignored when the decoder was built with prior_dim 0.
  ad::Tensor forward(const ad::Tensor& feature, const ad::Tensor& prior) const;

  std::size_t prior_dim() const { return prior_dim_; }
  std::size_t voxel_count() const { return voxel_count_; }
  void collect_parameters(std::vector<ad::NamedTensor>& out) const;

 private:
  std::size_t feature_dim_;
  std::size_t prior_dim_;
  std::size_t voxel_count_;
  DenseLayer l1_;
  DenseLayer l2_;
};

// How retrieved volumes are condensed into the prior vector.
enum class FusionMode { Lstm, Average, Top1 };

FusionMode fusion_from_string(const std::string& s);
std::string to_string(FusionMode mode);

// Prior dimension produced by a fusion mode (hidden size for LSTM, embedding
// size for the reduced modes that reuse the input projection).
std::size_t prior_dim_for(FusionMode mode, std::size_t embed_dim, std::size_t hidden_dim);

// Applies the configured fusion to a retrieved sequence; empty sequences
// yield a zero prior of the mode's dimension.
ad::Tensor fuse_prior(const LstmShapeEncoder& encoder, const RetrievedSequence& seq,
                      FusionMode mode);

// Hinge triplet loss max(s_kb - s_kp + margin, 0); subgradient 0 at the kink.
ad::Tensor triplet_loss(const ad::Tensor& s_kb, const ad::Tensor& s_kp, double margin);

// Differentiable key similarities of the query feature against the mined
// positive/negative key snapshots: (s_kp, s_kb).
std::pair<ad::Tensor, ad::Tensor> triplet_terms(const ad::Tensor& feature,
                                                const MinedTriplet& mined);

// Combined objective; the triplet term contributes exactly 0 when absent.
ad::Tensor total_loss(const ad::Tensor& triplet, const ad::Tensor& reconstruction);

}  // namespace voxmem::nets
