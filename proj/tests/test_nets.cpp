#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "voxmem/nets.hpp"

using namespace voxmem;
using ad::Tensor;

namespace {

void zero_parameters(std::vector<ad::NamedTensor>& params) {
  for (auto& p : params) {
    auto v = p.tensor.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

VoxelGrid random_binary(Rng& rng, std::size_t r, double density = 0.5) {
  std::vector<double> v(r * r * r);
  for (double& x : v) x = rng.chance(density) ? 1.0 : 0.0;
  return VoxelGrid::from_binary(r, std::move(v));
}

}  // namespace

TEST_CASE("encoder: zero weights give a zero feature") {
  Rng rng(1);
  nets::EncoderNet enc(12, 6, 4, rng);
  std::vector<ad::NamedTensor> params;
  enc.collect_parameters(params);
  zero_parameters(params);
  Tensor f = enc.forward(Tensor::full({12}, 0.7));
  for (double v : f.values()) CHECK(v == 0.0);
}

TEST_CASE("encoder: fixed seed gives bit-identical features") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    nets::EncoderNet enc(10, 8, 5, rng);
    Rng img_rng(77);
    Tensor img = Tensor::constant({10}, testutil::random_values(img_rng, 10, 0.0, 1.0));
    Tensor f = enc.forward(img);
    auto v = f.values();
    return std::vector<double>(v.begin(), v.end());
  };
  CHECK(run(5) == run(5));

  Rng rng(5);
  nets::EncoderNet enc(10, 8, 5, rng);
  CHECK_THROWS_AS(enc.forward(Tensor::full({9}, 0.5)), DimensionError);
}

TEST_CASE("encoder: gradient of |F|^2 matches finite differences") {
  Rng rng(2);
  nets::EncoderNet enc(8, 6, 4, rng);
  std::vector<ad::NamedTensor> params;
  enc.collect_parameters(params);
  Tensor img = Tensor::constant({8}, testutil::random_values(rng, 8, 0.0, 1.0));
  auto forward = [&]() {
    Tensor f = enc.forward(img);
    return ad::sum(ad::mul(f, f));
  };
  std::vector<Tensor> leaves;
  for (auto& p : params) leaves.push_back(p.tensor);
  CHECK(testutil::max_grad_error(forward, leaves) < 1e-4);
}

TEST_CASE("lstm step: zero cell analytics") {
  Rng rng(3);
  nets::LstmShapeEncoder shp(8, 3, 4, rng);
  std::vector<ad::NamedTensor> params;
  shp.collect_parameters(params);
  zero_parameters(params);

  // Zero weights, zero state: gates 0.5, g = 0, so c' = 0 and h' = 0.
  auto s0 = shp.zero_state();
  auto s1 = shp.step(Tensor::full({3}, 0.4), s0);
  for (double v : s1.c.values()) CHECK(v == 0.0);
  for (double v : s1.h.values()) CHECK(v == 0.0);

  // Zero weights, state c0: c' = 0.5*c0 and h' = 0.5*tanh(0.5*c0).
  std::vector<double> c0 = {0.8, -0.4, 1.2, 0.0};
  nets::LstmShapeEncoder::State mid{Tensor::zeros({4}), Tensor::constant({4}, c0)};
  auto s2 = shp.step(Tensor::full({3}, 0.4), mid);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(s2.c.values()[i] == doctest::Approx(0.5 * c0[i]).epsilon(1e-12));
    CHECK(s2.h.values()[i] ==
          doctest::Approx(0.5 * std::tanh(0.5 * c0[i])).epsilon(1e-12));
  }
}

TEST_CASE("lstm step: gradient w.r.t. the forget gate matches finite differences") {
  Rng rng(4);
  nets::LstmShapeEncoder shp(6, 3, 4, rng);
  Tensor x = Tensor::constant({3}, testutil::random_values(rng, 3, -1, 1));
  Tensor h = Tensor::constant({4}, testutil::random_values(rng, 4, -1, 1));
  Tensor c = Tensor::constant({4}, testutil::random_values(rng, 4, -1, 1));
  std::vector<ad::NamedTensor> params;
  shp.collect_parameters(params);
  Tensor w_f, b_f;
  for (auto& p : params) {
    if (p.name == "shp.gate_f.weight") w_f = p.tensor;
    if (p.name == "shp.gate_f.bias") b_f = p.tensor;
  }
  auto forward = [&]() {
    auto s = shp.step(x, {h, c});
    return ad::sum(s.h);
  };
  CHECK(testutil::max_grad_error(forward, {w_f, b_f}) < 1e-4);
}

TEST_CASE("encode_shapes: empty sequence and zero-weight cases") {
  Rng rng(5);
  nets::LstmShapeEncoder shp(8, 4, 6, rng);

  Tensor empty_prior = shp.encode({});
  REQUIRE(empty_prior.size() == 6);
  for (double v : empty_prior.values()) CHECK(v == 0.0);

  std::vector<ad::NamedTensor> params;
  shp.collect_parameters(params);
  zero_parameters(params);
  VoxelGrid v1 = random_binary(rng, 2);
  VoxelGrid v2 = random_binary(rng, 2);
  RetrievedSequence seq = {{&v1, 0.95, 0}, {&v2, 0.91, 1}};
  Tensor prior = shp.encode(seq);
  for (double v : prior.values()) CHECK(v == 0.0);
}

TEST_CASE("encode_shapes: permuting the sequence changes the output") {
  Rng rng(6);
  nets::LstmShapeEncoder shp(8, 4, 6, rng);
  VoxelGrid a = random_binary(rng, 2);
  VoxelGrid b = random_binary(rng, 2);
  VoxelGrid c = random_binary(rng, 2);
  while (b == a) b = random_binary(rng, 2);
  while (c == a || c == b) c = random_binary(rng, 2);

  RetrievedSequence order1 = {{&a, 0.95, 0}, {&b, 0.92, 1}, {&c, 0.90, 2}};
  RetrievedSequence order2 = {{&c, 0.95, 0}, {&a, 0.92, 1}, {&b, 0.90, 2}};
  Tensor t1 = shp.encode(order1);
  Tensor t2 = shp.encode(order2);
  auto p1 = t1.values();
  auto p2 = t2.values();
  bool differs = false;
  for (std::size_t i = 0; i < p1.size(); ++i) differs = differs || p1[i] != p2[i];
  CHECK(differs);
}

TEST_CASE("encode_shapes composes: prefix state equals full-sequence state") {
  Rng rng(7);
  nets::LstmShapeEncoder shp(8, 4, 6, rng);
  VoxelGrid a = random_binary(rng, 2);
  VoxelGrid b = random_binary(rng, 2);
  VoxelGrid c = random_binary(rng, 2);

  // encode feeds ascending similarity (reverse of the given ordering).
  RetrievedSequence full = {{&a, 0.97, 0}, {&b, 0.93, 1}, {&c, 0.91, 2}};
  Tensor full_tensor = shp.encode(full);
  auto full_out = full_tensor.values();

  auto s = shp.zero_state();
  s = shp.step(shp.project(grid_to_tensor(c)), s);
  s = shp.step(shp.project(grid_to_tensor(b)), s);
  s = shp.step(shp.project(grid_to_tensor(a)), s);
  auto manual = s.h.values();
  for (std::size_t i = 0; i < manual.size(); ++i) CHECK(full_out[i] == manual[i]);
}

TEST_CASE("decoder: zero weights give the uniform 0.5 grid") {
  Rng rng(8);
  nets::DecoderNet dec(5, 4, 6, 8, rng);
  std::vector<ad::NamedTensor> params;
  dec.collect_parameters(params);
  zero_parameters(params);
  Tensor out = dec.forward(Tensor::full({5}, 0.3), Tensor::full({4}, -0.2));
  REQUIRE(out.size() == 8);
  for (double v : out.values()) CHECK(v == 0.5);
}

TEST_CASE("decoder: bce gradient w.r.t. decoder weights matches finite differences") {
  Rng rng(9);
  nets::DecoderNet dec(4, 3, 5, 8, rng);
  VoxelGrid gt = random_binary(rng, 2);
  Tensor f = Tensor::constant({4}, testutil::random_values(rng, 4, -1, 1));
  Tensor prior = Tensor::constant({3}, testutil::random_values(rng, 3, -1, 1));
  std::vector<ad::NamedTensor> params;
  dec.collect_parameters(params);
  std::vector<Tensor> leaves;
  for (auto& p : params) leaves.push_back(p.tensor);
  auto forward = [&]() { return bce_loss(dec.forward(f, prior), gt); };
  CHECK(testutil::max_grad_error(forward, leaves) < 1e-4);
}

TEST_CASE("decoder without prior input ignores the prior argument") {
  Rng rng(10);
  nets::DecoderNet dec(4, 0, 5, 8, rng);
  Tensor out = dec.forward(Tensor::full({4}, 0.3), Tensor());
  CHECK(out.size() == 8);
  CHECK_THROWS_AS(dec.forward(Tensor::full({3}, 0.3), Tensor()), DimensionError);
}

TEST_CASE("triplet loss hand values") {
  auto lt = [](double skb, double skp, double alpha) {
    return nets::triplet_loss(Tensor::scalar(skb), Tensor::scalar(skp), alpha).value();
  };
  CHECK(lt(0.2, 0.9, 0.1) == 0.0);
  CHECK(lt(0.9, 0.2, 0.1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(lt(0.5, 0.45, 0.1) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("triplet loss is non-negative, zero exactly when the margin holds") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double skb = rng.uniform(-1, 1), skp = rng.uniform(-1, 1), alpha = 0.1;
    const double v = nets::triplet_loss(Tensor::scalar(skb), Tensor::scalar(skp), alpha).value();
    CHECK(v >= 0.0);
    if (skp >= skb + alpha) CHECK(v == 0.0);
    if (skp < skb + alpha) CHECK(v > 0.0);
  }
}

TEST_CASE("total loss adds the branches and splits gradients additively") {
  CHECK(nets::total_loss(Tensor::scalar(0.0), Tensor::scalar(0.693)).value() == 0.693);
  CHECK(nets::total_loss(Tensor::scalar(0.15), Tensor::scalar(0.5)).value() == 0.65);

  Rng rng(12);
  Tensor x = Tensor::variable({4}, testutil::random_values(rng, 4, 0.1, 0.9));
  auto forward = [&]() {
    Tensor lt = ad::sum(ad::mul(x, x));
    Tensor lr = ad::sum(ad::sigmoid(x));
    return nets::total_loss(lt, lr);
  };
  CHECK(testutil::max_grad_error(forward, {x}) < 1e-4);
}

TEST_CASE("gradient flow: all nets receive gradients, memory contents none") {
  Rng rng(13);
  const std::size_t r = 2, n_k = 6, n_e = 4, n_h = 5;
  nets::EncoderNet enc(12, 8, n_k, rng);
  nets::LstmShapeEncoder shp(r * r * r, n_e, n_h, rng);
  nets::DecoderNet dec(n_k, n_h, 8, r * r * r, rng);

  MemoryBank bank(8, n_k, r, 0.85, 0.90);
  VoxelGrid near = random_binary(rng, r);
  VoxelGrid far = random_binary(rng, r);
  while (value_similarity(near, far) >= 0.90) far = random_binary(rng, r);
  bank.write(std::vector<double>{1, 0, 0, 0, 0, 0}, near);
  bank.write(std::vector<double>{0, 1, 0, 0, 0, 0}, far);

  Tensor img = Tensor::constant({12}, testutil::random_values(rng, 12, 0.0, 1.0));
  const VoxelGrid& gt = near;

  std::vector<ad::NamedTensor> params;
  enc.collect_parameters(params);
  shp.collect_parameters(params);
  dec.collect_parameters(params);
  for (auto& p : params) p.tensor.zero_grad();

  std::vector<double> key_before_pos = bank.slot(0).key;
  {
    ad::Tape tape;
    Tensor f = enc.forward(img);
    // Use both stored values so the LSTM path is exercised.
    RetrievedSequence seq = {{&bank.slot(0).value, 0.99, 0}, {&bank.slot(1).value, 0.9, 1}};
    Tensor prior = shp.encode(seq);
    Tensor p = dec.forward(f, prior);
    Tensor l_r = bce_loss(p, gt);
    auto mined = bank.mine_triplet(f.values(), gt);
    REQUIRE(mined.has_value());
    auto [s_kp, s_kb] = nets::triplet_terms(f, *mined);
    Tensor loss = nets::total_loss(nets::triplet_loss(s_kb, s_kp, 0.1), l_r);
    tape.backward(loss);
  }

  for (auto& p : params) {
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += std::abs(g);
    CHECK_MESSAGE(norm > 0.0, "parameter without gradient: ", p.name);
  }
  // Stored keys and values are constants in the tape: untouched.
  CHECK(bank.slot(0).key == key_before_pos);
}
