#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "deid/gennet.hpp"
#include "gradcheck.hpp"

using namespace deid;
using namespace deid::gen;

namespace {

GeneratorSpec small_spec() {
  GeneratorSpec s;
  s.identities = 4;
  s.expressions = 2;
  s.y_hidden = 8;
  s.z_hidden = 4;
  s.base_channels = 4;
  s.base_size = 4;
  s.block_channels = {4, 3};
  return s;
}

double loop_mse(const img::Image& a, const img::Image& b) {
  double acc = 0;
  long n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c, ++n) acc += (a.at(x, y, c) - b.at(x, y, c)) * (a.at(x, y, c) - b.at(x, y, c));
  return acc / static_cast<double>(n);
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "deid_test_gennet";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(IdentityVector, Invariants) {
  EXPECT_NO_THROW(IdentityVector({0.25, 0.75}));
  EXPECT_THROW(IdentityVector({0.5, 0.6}), InvalidArgument);
  EXPECT_THROW(IdentityVector({-0.1, 1.1}), InvalidArgument);
  EXPECT_THROW(IdentityVector({}), InvalidArgument);
  const auto u = IdentityVector::uniform(6, std::vector<int>{1, 4, 5});
  EXPECT_NEAR(u.weights()[4], 1.0 / 3, 1e-15);
  EXPECT_EQ(u.weights()[0], 0.0);
  EXPECT_THROW(IdentityVector::one_hot(3, 3), InvalidArgument);
  EXPECT_THROW(AppearanceVector(4, 4), InvalidArgument);
  EXPECT_EQ(AppearanceVector(4, 2).values(), (std::vector<double>{0, 0, 1, 0}));
}

TEST(GeneratorSpec, DescribeRoundTrip) {
  const GeneratorSpec d;
  EXPECT_EQ(d.out_size(), 64);
  EXPECT_EQ(GeneratorSpec::parse(d.describe()), d);
  EXPECT_EQ(GeneratorSpec::parse(small_spec().describe()), small_spec());
  EXPECT_THROW(GeneratorSpec::parse("nonsense"), Error);
}

TEST(Generate, ShapeRangeAndDeterminism) {
  const Generator g(GeneratorSpec{}, 3);
  EXPECT_GT(g.parameter_count(), 0u);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> w(16);
    double s = 0;
    for (double& v : w) s += v = u(rng);
    for (double& v : w) v /= s;
    const IdentityVector y(w);
    const AppearanceVector z(4, trial % 4);
    const img::Image a = generate(g, y, z), b = generate(g, y, z);
    ASSERT_EQ(a.width(), 64);
    ASSERT_EQ(a.height(), 64);
    ASSERT_EQ(a.channels(), 3);
    for (double v : a.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    EXPECT_EQ(a, b);
  }
}

TEST(Generate, RejectsLengthMismatch) {
  const Generator g(small_spec(), 1);
  EXPECT_THROW(generate(g, IdentityVector::one_hot(5, 0), AppearanceVector(2, 0)), InvalidArgument);
  EXPECT_THROW(generate(g, IdentityVector::one_hot(4, 0), AppearanceVector(3, 0)), InvalidArgument);
}

TEST(Generate, IdentityInputIsNotRenormalized) {
  const Generator g(small_spec(), 2);
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  std::vector<double> seen;
  generate(g, IdentityVector(w), AppearanceVector(2, 1), [&](std::span<const double> in) {
    seen.assign(in.begin(), in.end());
  });
  EXPECT_EQ(seen, w);
}

TEST(MseLoss, Examples) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.8);
  img::Image a(9, 7, 3), b(9, 7, 3);
  for (double& v : a.data()) v = u(rng);
  for (double& v : b.data()) v = u(rng);
  EXPECT_EQ(mse_loss(a, a), 0.0);
  img::Image shifted = a;
  for (double& v : shifted.data()) v += 0.1;
  EXPECT_NEAR(mse_loss(shifted, a), 0.01, 1e-12);
  EXPECT_NEAR(mse_loss(a, b), loop_mse(a, b), 1e-12);
  EXPECT_THROW(mse_loss(a, img::Image(9, 7, 1)), InvalidArgument);
}

TEST(ParameterGradients, MatchFiniteDifferences) {
  Generator g(small_spec(), 5);
  const auto batch = gradcheck::random_examples(small_spec(), 4, 6);
  const auto r = gradcheck::check_generator(g, batch, 200, 7);
  EXPECT_GE(r.checked, 100);
  EXPECT_LE(r.max_rel, gradcheck::kTolerance) << r.worst;
}

TEST(ParameterGradients, ZeroLossBatchHasZeroGradient) {
  Generator g(small_spec(), 8);
  auto batch = gradcheck::random_examples(small_spec(), 4, 9);
  const Batch b = make_batch(small_spec(), batch);
  const nn::Tensor out = g.forward(b.y, b.z);
  for (int i = 0; i < 4; ++i) batch[i].target = chw_to_image(out, i);
  const GradientSet gs = parameter_gradients(g, batch);
  EXPECT_EQ(gs.loss, 0.0);
  for (const auto& grad : gs.grads)
    for (double v : grad) ASSERT_EQ(v, 0.0);
  const auto r = gradcheck::check_generator(g, batch, 100, 10);
  EXPECT_LE(r.max_rel, gradcheck::kTolerance) << r.worst;
}

TEST(ParameterGradients, DeterministicAndValidated) {
  Generator a(small_spec(), 11), b(small_spec(), 11);
  const auto batch = gradcheck::random_examples(small_spec(), 3, 12);
  const GradientSet ga = parameter_gradients(a, batch), gb = parameter_gradients(b, batch);
  EXPECT_EQ(ga.loss, gb.loss);
  EXPECT_EQ(ga.grads, gb.grads);
  EXPECT_THROW(parameter_gradients(a, std::span<const TrainingExample>{}), InvalidArgument);
}

TEST(BatchNormInGenerator, TrainingStatisticsStandardized) {
  Generator g(small_spec(), 13);
  const auto batch = gradcheck::random_examples(small_spec(), 4, 14);
  const Batch b = make_batch(small_spec(), batch);
  g.forward(b.y, b.z);
  for (auto* bn : g.batchnorms()) {
    const nn::Tensor& xhat = bn->normalized();
    const int channels = static_cast<int>(bn->batch_mean().size());
    const std::size_t spatial = xhat.numel() / (static_cast<std::size_t>(xhat.batch()) * channels);
    for (int c = 0; c < channels; ++c) {
      double mean = 0, var = 0;
      const double count = static_cast<double>(xhat.batch() * spatial);
      for (int n = 0; n < xhat.batch(); ++n)
        for (std::size_t i = 0; i < spatial; ++i) mean += xhat.data[(n * channels + c) * spatial + i];
      mean /= count;
      for (int n = 0; n < xhat.batch(); ++n)
        for (std::size_t i = 0; i < spatial; ++i) var += std::pow(xhat.data[(n * channels + c) * spatial + i] - mean, 2);
      var /= count;
      EXPECT_NEAR(mean, 0.0, 1e-6);
      const double bv = bn->batch_var()[c];
      EXPECT_NEAR(var, bv / (bv + 1e-5), 1e-9);
    }
  }
}

TEST(TrainGenerator, SingleImageMemorized) {
  const auto one = gradcheck::random_examples(small_spec(), 1, 15);
  // A smooth target; uniform noise cannot be reproduced by a 3x3 decoder.
  std::vector<TrainingExample> corpus{one[0]};
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) corpus[0].target.at(x, y, c) = 0.2 + 0.6 * (x + y + 5 * c) / 40.0;
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.adam.learning_rate = 1e-2;
  const TrainResult r = train_generator(corpus, small_spec(), cfg);
  EXPECT_LT(r.loss_curve.back(), 1e-3);
  EXPECT_LT(r.model.final_loss(), 1e-3);
}

TEST(TrainGenerator, DeterministicAndDecreasing) {
  const auto corpus = gradcheck::random_examples(small_spec(), 8, 16);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  cfg.seed = 21;
  const TrainResult a = train_generator(corpus, small_spec(), cfg), b = train_generator(corpus, small_spec(), cfg);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  ASSERT_EQ(a.loss_curve.size(), 30u);
  EXPECT_LT(a.loss_curve.back(), a.loss_curve.front());
  EXPECT_NEAR(a.model.final_loss(), evaluate_loss(a.model, corpus), 1e-12);
  EXPECT_THROW(train_generator(std::span<const TrainingExample>{}, small_spec(), cfg), InvalidArgument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto corpus = gradcheck::random_examples(small_spec(), 8, 17);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  TrainResult r = train_generator(corpus, small_spec(), cfg);
  LandmarkTemplate lm{};
  for (int i = 0; i < 5; ++i) lm[i] = {1.5 * i, 2.25 * i};
  r.model.set_canonical_landmarks(lm);
  const auto path = temp_path("g.bin");
  save_generator(r.model, path);
  const Generator back = load_generator(path);
  EXPECT_EQ(back.spec(), r.model.spec());
  EXPECT_EQ(back.canonical_landmarks(), r.model.canonical_landmarks());
  EXPECT_EQ(back.final_loss(), r.model.final_loss());
  EXPECT_NEAR(evaluate_loss(back, corpus), r.model.final_loss(), 1e-9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> w(4);
    double s = 0;
    for (double& v : w) s += v = u(rng);
    for (double& v : w) v /= s;
    EXPECT_EQ(generate(back, IdentityVector(w), AppearanceVector(2, i % 2)),
              generate(r.model, IdentityVector(w), AppearanceVector(2, i % 2)));
  }
  EXPECT_EQ(serialize_generator(back), serialize_generator(r.model));
}

TEST(Checkpoint, CorruptionIsRejected) {
  const Generator g(small_spec(), 1);
  const auto bytes = serialize_generator(g);
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  EXPECT_THROW(deserialize_generator(bad_magic), CheckpointError);
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  EXPECT_THROW(deserialize_generator(truncated), CheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_generator(trailing), CheckpointError);
  EXPECT_THROW(load_generator(temp_path("missing.bin")), Error);
}
