#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "reference_ops.hpp"
#include "xva/autoencoder.hpp"
#include "xva/error.hpp"
#include "xva/synth.hpp"

namespace xva {
namespace {

using testing::random_tensor;

Shape chw(std::size_t c, std::size_t h, std::size_t w) { return {c, h, w}; }

TEST(AEModel, ReproducesTableOneShapesAt256) {
  AEModel<float> ae({32, 256, 256});
  Rng rng(1);
  ae.init(rng);
  EncoderTape<float> et;
  const Tensor code = ae.encode(Tensor(chw(3, 256, 256), 0.1f), et);

  const std::vector<Shape> encoder_out = {chw(32, 128, 128), chw(32, 128, 128), chw(64, 64, 64),
                                          chw(64, 32, 32),   chw(128, 16, 16),  chw(128, 8, 8),
                                          chw(128, 4, 4),    chw(128, 2, 2)};
  ASSERT_EQ(et.post.size(), encoder_out.size());
  for (std::size_t i = 0; i < encoder_out.size(); ++i) {
    EXPECT_EQ(et.post[i].shape(), encoder_out[i]) << "conv2d_" << i + 1;
  }
  EXPECT_EQ(et.pooled.shape(), Shape{128});
  EXPECT_EQ(code.shape(), Shape{32});

  DecoderTape<float> dt;
  const Tensor out = ae.decode(code, dt);
  EXPECT_EQ(dt.expand_pre.shape(), Shape{512});
  const std::vector<Shape> decoder_in = {chw(128, 2, 2), chw(128, 4, 4), chw(128, 8, 8),
                                         chw(64, 16, 16), chw(64, 32, 32), chw(64, 64, 64),
                                         chw(32, 128, 128)};
  const std::vector<Shape> decoder_out = {chw(128, 4, 4),   chw(128, 8, 8),   chw(64, 16, 16),
                                          chw(64, 32, 32),  chw(64, 64, 64),  chw(32, 128, 128),
                                          chw(3, 256, 256)};
  ASSERT_EQ(dt.pre.size(), decoder_out.size());
  for (std::size_t i = 0; i < decoder_out.size(); ++i) {
    EXPECT_EQ(dt.inputs[i].shape(), decoder_in[i]) << "convTrans2d_" << i + 1;
    EXPECT_EQ(dt.pre[i].shape(), decoder_out[i]) << "convTrans2d_" << i + 1;
  }
  EXPECT_EQ(out.shape(), chw(3, 256, 256));
}

TEST(AEModel, LayerGeometryMatchesTableOne) {
  AEModel<float> ae;
  const std::size_t strides[] = {2, 1, 2, 2, 2, 2, 2, 2};
  for (std::size_t i = 0; i < kEncoderDepth; ++i) {
    EXPECT_EQ(ae.encoder[i].kernel(), 3u);
    EXPECT_EQ(ae.encoder[i].geom().padding, 1u);
    EXPECT_EQ(ae.encoder[i].geom().stride, strides[i]);
  }
  for (const auto& d : ae.decoder) {
    EXPECT_EQ(d.geom().stride, 2u);
    EXPECT_EQ(d.geom().padding, 1u);
  }
}

class AEInputSize : public ::testing::TestWithParam<std::size_t> {};

TEST_P(AEInputSize, EncodeDecodeRoundTripsShape) {
  const std::size_t n = GetParam();
  AEModel<float> ae({16, n, n});
  Rng rng(2);
  ae.init(rng);
  const Tensor code = ae.encode(Tensor(chw(3, n, n), 0.2f));
  EXPECT_EQ(code.shape(), Shape{16});
  EXPECT_EQ(ae.decode(code).shape(), chw(3, n, n));
}

INSTANTIATE_TEST_SUITE_P(Sizes, AEInputSize, ::testing::Values(64, 256, 48, 100));

TEST(AEModel, ZeroWeightsMapZeroToZero) {
  AEModel<float> ae({32, 64, 64});
  const Tensor code = ae.encode(Tensor(chw(3, 64, 64)));
  for (float v : code.data()) EXPECT_EQ(v, 0.0f);
  const Tensor frame = ae.decode(Tensor({32}));
  for (float v : frame.data()) EXPECT_EQ(v, 0.0f);
}

TEST(AEModel, DeterministicEncoding) {
  AEModel<float> ae({8, 32, 32});
  Rng rng(5);
  ae.init(rng);
  const auto frame = synth_frames(1, 32, 32, 9).front();
  EXPECT_EQ(ae.encode(frame), ae.encode(frame));
}

TEST(AEModel, RejectsWrongShapes) {
  AEModel<float> ae({8, 64, 64});
  EXPECT_THROW(ae.encode(Tensor(chw(3, 32, 32))), ShapeError);
  EXPECT_THROW(ae.encode(Tensor(chw(1, 64, 64))), ShapeError);
  EXPECT_THROW(ae.decode(Tensor({7})), ShapeError);
  EXPECT_THROW(AEModel<float>({0, 64, 64}), ConfigError);
}

TEST(AEModel, ActivationGradientChainsToInputGradient) {
  AEModel<double> ae({4, 16, 16});
  Rng rng(8);
  ae.init(rng);
  const Tensor64 x = random_tensor(chw(3, 16, 16), rng, 0.5);
  EncoderTape<double> tape;
  ae.encode(x, tape);
  const Tensor64 gc = random_tensor({4}, rng);
  const Tensor64 g0 = ae.encoder_activation_gradient(tape, gc, 0);
  const Tensor64 via_layer0 =
      ae.encoder[0].backward_input(x, ops::selu_backward(tape.pre[0], g0));
  const Tensor64 full = ae.backward_encoder(tape, gc);
  ASSERT_EQ(via_layer0.shape(), full.shape());
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(via_layer0[i], full[i], 1e-12);
}

// --- Losses ---------------------------------------------------------------------

TEST(LossDae, ZeroForIdenticalBatches) {
  Rng rng(1);
  const std::vector<Tensor64> q = {random_tensor(chw(3, 4, 4), rng),
                                   random_tensor(chw(3, 4, 4), rng)};
  EXPECT_EQ(loss_dae<double>(q, q), 0.0);
}

TEST(LossDae, UnitVectorGivesOne) {
  Tensor64 q(chw(3, 4, 4));
  q[0] = 1.0;
  const std::vector<Tensor64> a = {q}, b = {Tensor64(chw(3, 4, 4))};
  EXPECT_EQ(loss_dae<double>(a, b), 1.0);
}

TEST(LossDae, MatchesScalarLoop) {
  Rng rng(4);
  std::vector<Tensor64> q, r;
  for (int i = 0; i < 4; ++i) {
    q.push_back(random_tensor(chw(3, 5, 6), rng));
    r.push_back(random_tensor(chw(3, 5, 6), rng));
  }
  double expected = 0;
  for (int i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < q[i].size(); ++j)
      expected += (q[i][j] - r[i][j]) * (q[i][j] - r[i][j]);
  expected /= 4;
  EXPECT_NEAR(loss_dae<double>(q, r), expected, 1e-6);
}

TEST(LossDae, RejectsEmptyOrMismatchedBatches) {
  const std::vector<Tensor64> none;
  EXPECT_THROW(loss_dae<double>(none, none), UsageError);
  const std::vector<Tensor64> one = {Tensor64(chw(3, 2, 2))};
  const std::vector<Tensor64> other = {Tensor64(chw(3, 2, 3))};
  EXPECT_THROW(loss_dae<double>(one, other), ShapeError);
}

TEST(LossPerc, ZeroForIdenticalImages) {
  const auto phi = PerceptualExtractor<double>::random(3);
  Rng rng(1);
  const Tensor64 q = random_tensor(chw(3, 16, 16), rng);
  EXPECT_EQ(loss_perc(phi, q, q), 0.0);
}

TEST(LossPerc, IdentityFeatureMapNormalizesByElementCount) {
  PerceptualExtractor<double> identity;
  identity.layers.clear();
  const Tensor64 q(chw(3, 4, 4));
  Tensor64 r(chw(3, 4, 4));
  r[17] = 2.0;
  EXPECT_DOUBLE_EQ(loss_perc(identity, q, r), 4.0 / 48.0);
}

TEST(LossPerc, MatchesScalarLoopOverReferenceFeatures) {
  const auto phi = PerceptualExtractor<double>::random(11);
  Rng rng(12);
  const Tensor64 q = random_tensor(chw(3, 20, 20), rng);
  const Tensor64 r = random_tensor(chw(3, 20, 20), rng);
  auto features = [&](Tensor64 x) {
    for (const auto& l : phi.layers) {
      x = testing::conv2d_ref(x, l.weight.value, l.bias.value, 2, 1);
      for (auto& v : x.data()) v = std::max(v, 0.0);
    }
    return x;
  };
  const Tensor64 a = features(q), b = features(r);
  EXPECT_EQ(a.shape(), chw(32, 3, 3));
  double expected = 0;
  for (std::size_t i = 0; i < a.size(); ++i) expected += (a[i] - b[i]) * (a[i] - b[i]);
  expected /= static_cast<double>(a.size());
  EXPECT_NEAR(loss_perc(phi, q, r), expected, 1e-12);
}

TEST(LossFinalAe, IsSumOfTerms) {
  const auto phi = PerceptualExtractor<double>::random(5);
  Rng rng(6);
  std::vector<Tensor64> q, r;
  for (int i = 0; i < 3; ++i) {
    q.push_back(random_tensor(chw(3, 12, 12), rng));
    r.push_back(random_tensor(chw(3, 12, 12), rng));
  }
  double perc = 0;
  for (int i = 0; i < 3; ++i) perc += loss_perc(phi, q[i], r[i]);
  const double expected = loss_dae<double>(q, r) + perc / 3;
  EXPECT_NEAR(loss_final_ae<double>(phi, q, r), expected, 1e-12);
  EXPECT_EQ(loss_final_ae<double>(phi, q, q), 0.0);

  std::vector<Tensor64> grads;
  EXPECT_NEAR(loss_final_ae_with_grad<double>(&phi, q, r, grads), expected, 1e-12);
  EXPECT_EQ(grads.size(), 3u);
  EXPECT_NEAR(loss_final_ae_with_grad<double>(nullptr, q, r, grads), loss_dae<double>(q, r),
              1e-12);
}

// --- Schedule and training ---------------------------------------------------------

TEST(LrSchedule, StepDecayWithoutPlateausHitsTheFloor) {
  LrSchedule s;
  std::vector<double> trace;
  double loss = 100.0;
  for (int e = 0; e < 100; ++e) {
    trace.push_back(s.current());
    s.end_epoch(loss);
    loss *= 0.99;
  }
  for (int e = 0; e < 20; ++e) EXPECT_DOUBLE_EQ(trace[e], 1e-3) << e;
  for (int e = 20; e < 40; ++e) EXPECT_DOUBLE_EQ(trace[e], 2e-4) << e;
  for (int e = 40; e < 100; ++e) EXPECT_DOUBLE_EQ(trace[e], 5e-5) << e;
}

TEST(LrSchedule, PlateauOfFiveEpochsDecays) {
  LrSchedule s;
  EXPECT_FALSE(s.end_epoch(1.0));  // epoch 1 sets the best value
  for (int e = 2; e <= 5; ++e) EXPECT_FALSE(s.end_epoch(1.0)) << e;
  EXPECT_TRUE(s.end_epoch(1.0));  // fifth epoch without improvement
  EXPECT_DOUBLE_EQ(s.current(), 2e-4);
  for (int e = 7; e <= 10; ++e) EXPECT_FALSE(s.end_epoch(0.5 + 0.1 * e)) << e;
  EXPECT_FALSE(s.end_epoch(0.1));  // improvement resets the count
  EXPECT_DOUBLE_EQ(s.current(), 2e-4);
}

TEST(LrSchedule, NeverDropsBelowMinimum) {
  LrSchedule s({1e-3, 0.2, 1, 5, 5e-5});
  for (int e = 0; e < 10; ++e) s.end_epoch(1.0 / (e + 1));
  EXPECT_DOUBLE_EQ(s.current(), 5e-5);
}

AETrainOptions small_options(std::size_t epochs) {
  AETrainOptions o;
  o.epochs = epochs;
  o.batch_size = 2;
  o.seed = 4;
  return o;
}

TEST(TrainAe, SingleRepeatedFrameConverges) {
  AEModel<float> ae({8, 16, 16});
  Rng rng(21);
  ae.init(rng);
  const auto phi = PerceptualExtractor<float>::random(22);
  const auto frame = synth_frames(1, 16, 16, 23).front();
  const std::vector<Tensor> frames(8, frame);
  const auto result = train_ae<float>(ae, phi, frames, {0.1, 24}, small_options(20));
  ASSERT_EQ(result.epoch_loss.size(), 20u);
  for (std::size_t e = 5; e < 20; ++e) {
    EXPECT_LE(result.epoch_loss[e], result.epoch_loss[e - 1] * (1 + 1e-6)) << "epoch " << e + 1;
  }
  EXPECT_LT(result.epoch_loss[19], 0.1 * result.epoch_loss[0]);
}

TEST(TrainAe, DeterministicAndLeavesPhiUntouched) {
  const auto phi = PerceptualExtractor<float>::random(31);
  const auto phi_before = phi.layers;
  const auto frames = synth_frames(6, 16, 16, 32);
  auto run = [&] {
    AEModel<float> ae({8, 16, 16});
    Rng rng(33);
    ae.init(rng);
    return train_ae<float>(ae, phi, frames, {0.1, 34}, small_options(3)).epoch_loss;
  };
  EXPECT_EQ(run(), run());
  for (std::size_t i = 0; i < phi.layers.size(); ++i) {
    EXPECT_EQ(phi.layers[i].weight.value, phi_before[i].weight.value);
    EXPECT_EQ(phi.layers[i].bias.value, phi_before[i].bias.value);
  }
}

TEST(TrainAe, ZeroSigmaIgnoresTheNoiseStream) {
  const auto phi = PerceptualExtractor<float>::random(41);
  const auto frames = synth_frames(4, 16, 16, 42);
  auto run = [&](std::uint64_t noise_seed) {
    AEModel<float> ae({8, 16, 16});
    Rng rng(43);
    ae.init(rng);
    return train_ae<float>(ae, phi, frames, {0.0, noise_seed}, small_options(2)).epoch_loss;
  };
  EXPECT_EQ(run(1), run(999));
}

TEST(TrainAe, RejectsEmptyDataset) {
  AEModel<float> ae({8, 16, 16});
  const auto phi = PerceptualExtractor<float>::random(1);
  const std::vector<Tensor> none;
  EXPECT_THROW(train_ae<float>(ae, phi, none, {}, small_options(1)), UsageError);
}

TEST(ExtractFeatures, RowsAreIndependentPerFrameCodes) {
  AEModel<float> ae({8, 16, 16});
  Rng rng(51);
  ae.init(rng);
  auto frames = synth_frames(5, 16, 16, 52);
  const Tensor f = extract_features<float>(ae, frames);
  ASSERT_EQ(f.shape(), (Shape{5, 8}));
  for (std::size_t t = 0; t < 5; ++t) {
    const Tensor code = ae.encode(frames[t]);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(f.at(t, j), code[j]);
  }
  std::reverse(frames.begin(), frames.end());
  const Tensor r = extract_features<float>(ae, frames);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(r.at(t, j), f.at(4 - t, j));

  const std::vector<Tensor> one(frames.begin(), frames.begin() + 1);
  EXPECT_EQ(extract_features<float>(ae, one).shape(), (Shape{1, 8}));
  EXPECT_THROW(extract_features<float>(ae, std::vector<Tensor>{}), UsageError);
}

}  // namespace
}  // namespace xva
