#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "advad/data.hpp"
#include "advad/error.hpp"
#include "advad/image.hpp"
#include "advad/model.hpp"

namespace advad::fixtures {

/// Code of the advad::Error thrown by f; records a failure if none is thrown.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

inline ImageTensor random_byte_image(Shape shape, std::uint64_t seed, bool integer = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  ImageTensor img(shape, RangeTag::kByte);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = integer ? std::round(u(rng)) : u(rng);
  return img;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline BuiltinCnn small_cnn(std::uint64_t seed, std::size_t side = 8, std::size_t classes = 2) {
  CnnDims dims;
  dims.input = {side, side, 3};
  dims.num_classes = classes;
  return BuiltinCnn::initialized(dims, seed);
}

/// A quickly trained 32x32 two-class model shared by the slower tests.
struct TrainedFixture {
  Dataset data;
  Split split;
  BuiltinCnn model{CnnDims{}};
};

inline const TrainedFixture& trained_fixture() {
  static const TrainedFixture f = [] {
    TrainedFixture t;
    t.data = gen_synthetic(2, 150, 32, 3);
    t.split = split_dataset(t.data, 0.8, 3);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 3;
    t.model = train_reference(t.split.train, t.split.test, cfg).model;
    return t;
  }();
  return f;
}

}  // namespace advad::fixtures
