#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "advad/data.hpp"
#include "advad/error.hpp"
#include "advad/model.hpp"
#include "support.hpp"

using namespace advad;
using advad::fixtures::code_of;
namespace fs = std::filesystem;

namespace {

double loss_at(const Classifier& m, const ImageTensor& x, std::size_t y, LossKind kind) {
  return loss_value(m.forward(x), y, kind);
}

// Central difference of the loss along direction v, in byte units.
double directional_fd(const Classifier& m, const ImageTensor& x, const std::vector<double>& v,
                      std::size_t y, LossKind kind, double h) {
  ImageTensor plus = x, minus = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus[i] += h * v[i];
    minus[i] -= h * v[i];
  }
  return (loss_at(m, plus, y, kind) - loss_at(m, minus, y, kind)) / (2 * h);
}

LinearClassifier random_linear(Shape s, std::size_t k, std::uint64_t seed) {
  return LinearClassifier(s, k, fixtures::random_vector(k * s.size(), seed, -0.02, 0.02),
                          fixtures::random_vector(k, seed + 1));
}

}  // namespace

TEST(Softmax, MatchesExtendedPrecision) {
  const std::vector<double> z{1.5, -2.0, 0.25, 3.0};
  long double den = 0;
  for (double v : z) den += std::exp(static_cast<long double>(v));
  const auto p = softmax(z);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double want = static_cast<double>(std::exp(static_cast<long double>(z[k])) / den);
    EXPECT_NEAR(p[k], want, 1e-15);
    EXPECT_NEAR(softmax_prob(z, k), want, 1e-15);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const std::vector<double> z{1000.0, -1000.0, 999.0};
  const auto p = softmax(z);
  for (double v : p) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(LogOneMinusP, StableWhenConfident) {
  // p_y = 1 - tiny; naive log(1 - p) would be -inf.
  const std::vector<double> z{60.0, 0.0};
  const double v = log_one_minus_p(z, 0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -60.0, 1e-12);
  EXPECT_NEAR(log_one_minus_p(std::vector<double>{0.0, 0.0}, 1), std::log(0.5), 1e-15);
}

TEST(LogOneMinusP, DegenerateClasses) {
  EXPECT_EQ(code_of([] { log_one_minus_p(std::vector<double>{1.0}, 0); }), ErrorCode::kDegenerateClasses);
}

TEST(LossGradient, LogitOracles) {
  const std::vector<double> z{0.3, -1.1, 2.0};
  const auto p = softmax(z);
  for (std::size_t y = 0; y < z.size(); ++y) {
    const auto ce = loss_logit_gradient(z, y, LossKind::kCrossEntropy);
    const auto lm = loss_logit_gradient(z, y, LossKind::kLog1mp);
    double rest = 0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k != y) rest += std::exp(z[k]);
    }
    for (std::size_t k = 0; k < z.size(); ++k) {
      EXPECT_NEAR(ce[k], p[k] - (k == y ? 1.0 : 0.0), 1e-14);
      const double want = k == y ? -p[y] : std::exp(z[k]) / rest - p[k];
      EXPECT_NEAR(lm[k], want, 1e-14);
    }
  }
}

TEST(Argmax, FirstOfTiesAndEmpty) {
  EXPECT_EQ(argmax(std::vector<double>{1, 3, 3, 2}), 1u);
  EXPECT_EQ(code_of([] { argmax(std::vector<double>{}); }), ErrorCode::kEmptyInput);
}

TEST(LinearClassifier, GradientClosedForm) {
  const Shape s{4, 4, 3};
  const LinearClassifier m = random_linear(s, 3, 9);
  const ImageTensor x = fixtures::random_byte_image(s, 10);
  const auto z = m.forward(x);
  const auto dz = loss_logit_gradient(z, 1, LossKind::kCrossEntropy);
  const ImageTensor g = input_gradient(m, x, 1, LossKind::kCrossEntropy);
  const auto w = fixtures::random_vector(3 * s.size(), 9, -0.02, 0.02);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double want = 0;
    for (std::size_t k = 0; k < 3; ++k) want += w[k * s.size() + i] * dz[k];
    EXPECT_NEAR(g[i], want, 1e-15);
  }
  EXPECT_EQ(code_of([&] { gradcam_mask(m, x, 0); }), ErrorCode::kNoCamSupport);
  EXPECT_EQ(code_of([&] { m.forward(ImageTensor({4, 4, 1}, RangeTag::kByte)); }), ErrorCode::kShapeMismatch);
}

TEST(BuiltinCnn, ParameterCount) {
  EXPECT_EQ(BuiltinCnn::parameter_count(CnnDims{}), 1426u);
  EXPECT_EQ(fixtures::small_cnn(1).parameters().size(), 1426u);
  CnnDims one_class;
  one_class.num_classes = 1;
  EXPECT_EQ(code_of([&] { BuiltinCnn b(one_class); }), ErrorCode::kDegenerateClasses);
}

// Property: the analytic input gradient agrees with finite differences for
// both losses on random inputs.
TEST(BuiltinCnn, InputGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const BuiltinCnn m = fixtures::small_cnn(100 + seed, 8, 2 + seed % 2);
    const ImageTensor x = fixtures::random_byte_image({8, 8, 3}, 200 + seed, false);
    const std::size_t y = seed % m.num_classes();
    for (LossKind kind : {LossKind::kLog1mp, LossKind::kCrossEntropy}) {
      const ImageTensor g = input_gradient(m, x, y, kind);
      for (std::uint64_t d = 0; d < 3; ++d) {
        const auto v = fixtures::random_vector(x.size(), 300 + 10 * seed + d);
        double analytic = 0;
        for (std::size_t i = 0; i < v.size(); ++i) analytic += g[i] * v[i];
        const double fd = directional_fd(m, x, v, y, kind, 1e-3);
        EXPECT_LE(std::abs(fd - analytic), 1e-4 * std::max(std::abs(analytic), 1e-6))
            << "seed " << seed << " dir " << d;
      }
    }
  }
}

TEST(BuiltinCnn, ParameterGradientMatchesFiniteDifferences) {
  BuiltinCnn m = fixtures::small_cnn(7, 8, 3);
  const ImageTensor x = fixtures::random_byte_image({8, 8, 3}, 8, false);
  std::vector<double> grad(m.parameters().size(), 0.0);
  const double loss = m.accumulate_parameter_gradient(x, 2, grad);
  EXPECT_NEAR(loss, loss_at(m, x, 2, LossKind::kCrossEntropy), 1e-12);
  auto params = m.parameters();
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); i += 37) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss_at(m, x, 2, LossKind::kCrossEntropy);
    params[i] = keep - h;
    const double down = loss_at(m, x, 2, LossKind::kCrossEntropy);
    params[i] = keep;
    EXPECT_NEAR((up - down) / (2 * h), grad[i], 1e-5 + 1e-4 * std::abs(grad[i])) << "param " << i;
  }
}

TEST(BuiltinCnn, DeadDenseLayerGivesZeroGradient) {
  BuiltinCnn m = fixtures::small_cnn(4);
  for (double& w : m.dense_weights()) w = 0.0;
  const ImageTensor x = fixtures::random_byte_image({8, 8, 3}, 5);
  for (LossKind kind : {LossKind::kLog1mp, LossKind::kCrossEntropy}) {
    const ImageTensor g = input_gradient(m, x, 0, kind);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], 0.0);
  }
}

TEST(GradCam, HandBuiltMap) {
  const std::vector<double> act{0, 1, 2, 3};
  const Mask m = gradcam_from_activations(act, 2, 2, std::vector<double>{1.0}, 2, 2);
  ASSERT_EQ(m.values.size(), 4u);
  EXPECT_NEAR(m.at(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(m.at(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.at(1, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.at(1, 1), 1.0, 1e-15);
}

TEST(GradCam, DegenerateMaps) {
  const Mask zeros = gradcam_from_activations(std::vector<double>(8, 0.0), 2, 2, std::vector<double>{1, 1}, 4, 4);
  for (double v : zeros.values) EXPECT_EQ(v, 0.0);
  const Mask negative = gradcam_from_activations(std::vector<double>(4, 1.0), 2, 2, std::vector<double>{-1}, 4, 4);
  for (double v : negative.values) EXPECT_EQ(v, 0.0);
  const Mask ones = gradcam_from_activations(std::vector<double>{2.0}, 1, 1, std::vector<double>{0.5}, 3, 5);
  EXPECT_EQ(ones.values.size(), 15u);
  for (double v : ones.values) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(code_of([] { gradcam_from_activations(std::vector<double>(3), 2, 2, std::vector<double>{1}, 2, 2); }),
            ErrorCode::kShapeMismatch);
}

TEST(GradCam, CnnMaskInUnitInterval) {
  const BuiltinCnn m = fixtures::small_cnn(12, 16);
  const ImageTensor x = fixtures::random_byte_image({16, 16, 3}, 13);
  const Mask mask = gradcam_mask(m, x, 1);
  EXPECT_EQ(mask.height, 16u);
  EXPECT_EQ(mask.width, 16u);
  for (double v : mask.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(ModelFile, SaveLoadRoundTrip) {
  BuiltinCnn m = fixtures::small_cnn(21, 8, 3);
  for (double& p : m.parameters()) p = static_cast<float>(p);
  const fs::path p = fs::temp_directory_path() / "advad_test_model.advm";
  save_model(m, p);
  const BuiltinCnn back = load_model(p);
  EXPECT_EQ(back, m);
  const ImageTensor x = fixtures::random_byte_image({8, 8, 3}, 22);
  EXPECT_EQ(back.forward(x), m.forward(x));
}

TEST(ModelFile, MalformedAndMissing) {
  const fs::path p = fs::temp_directory_path() / "advad_test_model_bad.advm";
  save_model(fixtures::small_cnn(1), p);
  fs::resize_file(p, fs::file_size(p) - 4);
  EXPECT_EQ(code_of([&] { load_model(p); }), ErrorCode::kMalformedHeader);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "NOPE1234";
  }
  EXPECT_EQ(code_of([&] { load_model(p); }), ErrorCode::kMalformedHeader);
  EXPECT_EQ(code_of([] { load_model("/nonexistent/model.advm"); }), ErrorCode::kIo);
}

TEST(Training, DeterministicGivenSeed) {
  const Dataset d = gen_synthetic(2, 10, 16, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  const TrainResult a = train_reference(d, d, cfg);
  const TrainResult b = train_reference(d, d, cfg);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history[1].mean_loss, b.history[1].mean_loss);
}

TEST(Training, ZeroEpochsReturnsInitialization) {
  const Dataset d = gen_synthetic(2, 4, 16, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 9;
  std::size_t calls = 0;
  const TrainResult r = train_reference(d, d, cfg, [&](const EpochLog&) { ++calls; });
  EXPECT_EQ(calls, 0u);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.model, BuiltinCnn::initialized(CnnDims{{16, 16, 3}, 8, 16, 2}, 9));
}

TEST(Training, EmptyAndDivergent) {
  EXPECT_EQ(code_of([] { train_reference(Dataset{}, Dataset{}, TrainConfig{}); }), ErrorCode::kEmptyInput);
  const Dataset d = gen_synthetic(2, 6, 16, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e300;
  EXPECT_EQ(code_of([&] { train_reference(d, d, cfg); }), ErrorCode::kDivergence);
}

TEST(Training, FixtureLearnsTheTask) {
  const auto& f = fixtures::trained_fixture();
  EXPECT_GE(accuracy(f.model, f.split.test), 0.9);
}
