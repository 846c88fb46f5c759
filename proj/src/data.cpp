#include "advad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "advad/error.hpp"

namespace advad {

Dataset gen_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t size,
                      std::uint64_t seed) {
  return gen_synthetic(num_classes, per_class, size, seed, SyntheticStyle{});
}

Dataset gen_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t size,
                      std::uint64_t seed, const SyntheticStyle& style) {
  if (num_classes < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two classes");
  if (size < 16) throw Error(ErrorCode::kInvalidArgument, "image size must be at least 16");
  if (per_class == 0) throw Error(ErrorCode::kEmptyInput, "per_class = 0 gives an empty dataset");
  if (!(style.noise_sigma >= 0.0) || !(style.texture_amplitude >= 0.0) || !(style.blob_amplitude >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "style amplitudes must be >= 0");
  }

  const double pi = std::numbers::pi;
  const double s = static_cast<double>(size);
  const Shape shape{size, size, 3};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, style.noise_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset data;
  data.num_classes = num_classes;
  data.provenance = Provenance::kSynthetic;
  data.samples.reserve(num_classes * per_class);

  for (std::size_t k = 0; k < num_classes; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(num_classes);
    const double freq = 2.0 + static_cast<double>(k % 3);
    const double theta = pi * frac;
    const double dir_x = std::cos(theta), dir_y = std::sin(theta);
    const double hue = 2.0 * pi * frac;
    const double color[3] = {std::cos(hue), std::cos(hue - 2.0 * pi / 3.0), std::cos(hue + 2.0 * pi / 3.0)};
    const double blob_cx = s * (0.5 + 0.25 * std::cos(hue + pi / 4.0));
    const double blob_cy = s * (0.5 + 0.25 * std::sin(hue + pi / 4.0));
    const double blob_r = s / 6.0;

    for (std::size_t n = 0; n < per_class; ++n) {
      const double phase = 2.0 * pi * unit(rng);
      const double jitter_x = (unit(rng) - 0.5) * 4.0;
      const double jitter_y = (unit(rng) - 0.5) * 4.0;
      ImageTensor img(shape, RangeTag::kByte);
      for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
          const double u = (dir_x * static_cast<double>(c) + dir_y * static_cast<double>(r)) / s;
          const double texture = style.texture_amplitude * std::sin(2.0 * pi * freq * u + phase);
          const double dx = static_cast<double>(c) - blob_cx - jitter_x;
          const double dy = static_cast<double>(r) - blob_cy - jitter_y;
          const double blob = style.blob_amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * blob_r * blob_r));
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double v = 128.0 + texture * (0.6 + 0.4 * color[ch]) + blob * color[ch] + noise(rng);
            img.at(r, c, ch) = quantize_value(v);
          }
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "syn_%zu_%05zu", k, n);
      data.samples.push_back({std::move(img), k, name});
    }
  }
  return data;
}

Dataset load_png_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIo, "not a directory: " + root.string());

  std::vector<std::pair<std::size_t, fs::path>> label_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    std::size_t label = 0;
    const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), label);
    if (ec != std::errc() || ptr != name.data() + name.size()) {
      throw Error(ErrorCode::kInvalidArgument, "label directory is not an integer: " + name);
    }
    label_dirs.emplace_back(label, entry.path());
  }
  std::sort(label_dirs.begin(), label_dirs.end());

  Dataset data;
  data.provenance = Provenance::kDirectory;
  for (const auto& [label, dir] : label_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& file : files) {
      ImageTensor img = read_png(file);
      if (!data.samples.empty() && img.shape() != data.samples.front().image.shape()) {
        throw Error(ErrorCode::kShapeMismatch, "mixed image shapes: " + file.string());
      }
      data.samples.push_back({std::move(img), label, std::to_string(label) + "/" + file.stem().string()});
      data.num_classes = std::max(data.num_classes, label + 1);
    }
  }
  if (data.empty()) throw Error(ErrorCode::kEmptyInput, "no PNG files under " + root.string());
  return data;
}

void write_png_dir(const Dataset& data, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data.samples[i];
    const fs::path dir = root / std::to_string(s.label);
    fs::create_directories(dir);
    std::string stem = s.name.empty() ? std::to_string(i) : s.name;
    std::replace(stem.begin(), stem.end(), '/', '_');
    write_png(s.image, dir / (stem + ".png"));
  }
}

Split split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train fraction must be in [0, 1]");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(data.size())));

  Split split;
  split.train.num_classes = split.test.num_classes = data.num_classes;
  split.train.provenance = split.test.provenance = data.provenance;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_train) {
      split.train.samples.push_back(data.samples[order[i]]);
    } else {
      split.test.samples.push_back(data.samples[order[i]]);
      split.test_indices.push_back(order[i]);
    }
  }
  return split;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_image(const ImageTensor& img) {
  const std::uint64_t dims[3] = {img.height(), img.width(), img.channels()};
  const std::uint64_t h = fnv1a64(dims, sizeof(dims));
  return fnv1a64(img.data().data(), img.size() * sizeof(double), h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json dataset_manifest(const Dataset& data) {
  nlohmann::json samples = nlohmann::json::array();
  for (const Sample& s : data.samples) {
    samples.push_back({{"name", s.name},
                       {"label", s.label},
                       {"shape", {s.image.height(), s.image.width(), s.image.channels()}},
                       {"hash", hex64(hash_image(s.image))}});
  }
  return {{"provenance", data.provenance == Provenance::kSynthetic ? "synthetic" : "directory"},
          {"num_classes", data.num_classes},
          {"samples", std::move(samples)}};
}

}  // namespace advad
