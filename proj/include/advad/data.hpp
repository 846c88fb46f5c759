#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advad/image.hpp"

namespace advad {

struct Sample {
  ImageTensor image;  // integer-valued Byte tensor
  std::size_t label = 0;
  std::string name;
};

enum class Provenance { kSynthetic, kDirectory };

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;
  Provenance provenance = Provenance::kSynthetic;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Pattern strengths of the synthetic generator, in byte units.
struct SyntheticStyle {
  double texture_amplitude = 10.0;
  double blob_amplitude = 13.0;
  double noise_sigma = 10.0;
};

/// Class k gets a sinusoidal texture (class-specific frequency and
/// orientation) plus a colored blob at a class-specific position; every pixel
/// then gets N(0, 10^2) noise and is rounded into [0, 255]. Deterministic
/// given the seed.
Dataset gen_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t size,
                      std::uint64_t seed);
Dataset gen_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t size,
                      std::uint64_t seed, const SyntheticStyle& style);

/// Reads `<root>/<label>/<name>.png` where <label> is a nonnegative integer.
/// Samples are ordered by label, then file name.
Dataset load_png_dir(const std::filesystem::path& root);

/// Writes the dataset back out in the load_png_dir layout.
void write_png_dir(const Dataset& data, const std::filesystem::path& root);

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> test_indices;  // positions in the source dataset
};

/// Seeded shuffle, then the first `train_fraction` of samples go to train.
Split split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

/// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_image(const ImageTensor& img);
std::string hex64(std::uint64_t v);

/// {provenance, num_classes, samples: [{name, label, shape, hash}]}.
nlohmann::json dataset_manifest(const Dataset& data);

}  // namespace advad
