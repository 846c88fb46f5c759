#include "advad/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "advad/data.hpp"
#include "advad/error.hpp"

namespace advad {

// ---------------------------------------------------------------------------
// softmax head

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "argmax of empty vector");
  return static_cast<std::size_t>(std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

namespace {

void check_label(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) + " classes");
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

double softmax_prob(std::span<const double> logits, std::size_t label) {
  check_label(logits, label);
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  return std::exp(logits[label] - m) / total;
}

double log_one_minus_p(std::span<const double> logits, std::size_t label) {
  if (logits.size() < 2) throw Error(ErrorCode::kDegenerateClasses, "log(1 - p) needs at least two classes");
  check_label(logits, label);
  const double m = *std::max_element(logits.begin(), logits.end());
  double others = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double e = std::exp(logits[k] - m);
    total += e;
    if (k != label) others += e;
  }
  if (others > 0.0) return std::log(others) - std::log(total);
  // Every other class underflowed relative to the max (which is then the
  // label); shift by the largest competing logit instead.
  double m_other = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k != label) m_other = std::max(m_other, logits[k]);
  }
  double others_shifted = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k != label) others_shifted += std::exp(logits[k] - m_other);
  }
  return (m_other - m) + std::log(others_shifted) - std::log(total);
}

double loss_value(std::span<const double> logits, std::size_t label, LossKind kind) {
  check_label(logits, label);
  if (kind == LossKind::kLog1mp) return log_one_minus_p(logits, label);
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  return -(logits[label] - m - std::log(total));
}

std::vector<double> loss_logit_gradient(std::span<const double> logits, std::size_t label,
                                        LossKind kind) {
  check_label(logits, label);
  std::vector<double> p = softmax(logits);
  if (kind == LossKind::kCrossEntropy) {
    p[label] -= 1.0;
    return p;
  }
  if (logits.size() < 2) throw Error(ErrorCode::kDegenerateClasses, "log(1 - p) needs at least two classes");
  // d/dz_k log(sum_{j != y} e^{z_j}) - log(sum_j e^{z_j}) = q_k [k != y] - p_k,
  // q being the softmax restricted to the non-label classes.
  double m_other = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k != label) m_other = std::max(m_other, logits[k]);
  }
  std::vector<double> q(logits.size(), 0.0);
  double q_total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k == label) continue;
    q[k] = std::exp(logits[k] - m_other);
    q_total += q[k];
  }
  std::vector<double> grad(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) grad[k] = q[k] / q_total - p[k];
  grad[label] = -p[label];
  return grad;
}

// ---------------------------------------------------------------------------
// Classifier

std::optional<Mask> Classifier::cam_mask(const ImageTensor&, std::size_t) const { return std::nullopt; }

ImageTensor input_gradient(const Classifier& model, const ImageTensor& img, std::size_t label,
                           LossKind kind) {
  if (img.shape() != model.input_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "input shape does not match the classifier");
  }
  return model.loss_and_gradient(img, label, kind).gradient;
}

Mask gradcam_mask(const Classifier& model, const ImageTensor& img, std::size_t label) {
  auto mask = model.cam_mask(img, label);
  if (!mask) throw Error(ErrorCode::kNoCamSupport, "classifier does not expose conv activations");
  return *std::move(mask);
}

Mask gradcam_from_activations(std::span<const double> activations, std::size_t act_h,
                              std::size_t act_w, std::span<const double> channel_weights,
                              std::size_t out_h, std::size_t out_w) {
  const std::size_t k = channel_weights.size();
  if (activations.size() != act_h * act_w * k || act_h == 0 || act_w == 0) {
    throw Error(ErrorCode::kShapeMismatch, "activation block does not match h*w*k");
  }
  std::vector<double> cam(act_h * act_w);
  for (std::size_t p = 0; p < cam.size(); ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += channel_weights[c] * activations[p * k + c];
    cam[p] = std::max(s, 0.0);
  }

  Mask mask{out_h, out_w, std::vector<double>(out_h * out_w)};
  const double sy = static_cast<double>(act_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(act_w) / static_cast<double>(out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(act_h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, act_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(act_w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, act_w - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = cam[y0 * act_w + x0] * (1.0 - wx) + cam[y0 * act_w + x1] * wx;
      const double bottom = cam[y1 * act_w + x0] * (1.0 - wx) + cam[y1 * act_w + x1] * wx;
      mask.values[r * out_w + c] = top * (1.0 - wy) + bottom * wy;
    }
  }

  const auto [lo_it, hi_it] = std::minmax_element(mask.values.begin(), mask.values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi <= 0.0) {
    std::fill(mask.values.begin(), mask.values.end(), 0.0);
  } else if (hi - lo <= 0.0) {
    std::fill(mask.values.begin(), mask.values.end(), 1.0);
  } else {
    for (double& v : mask.values) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }
  return mask;
}

// ---------------------------------------------------------------------------
// LinearClassifier

LinearClassifier::LinearClassifier(Shape input, std::size_t num_classes, std::vector<double> weights,
                                   std::vector<double> bias)
    : input_(input), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (bias_.size() != num_classes || weights_.size() != num_classes * input_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "linear classifier weights do not match shape");
  }
}

std::vector<double> LinearClassifier::forward(const ImageTensor& img) const {
  if (img.shape() != input_) throw Error(ErrorCode::kShapeMismatch, "input shape does not match the classifier");
  const std::size_t n = input_.size();
  std::vector<double> z(bias_);
  for (std::size_t k = 0; k < z.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) z[k] += weights_[k * n + i] * img[i];
  }
  return z;
}

LossGradient LinearClassifier::loss_and_gradient(const ImageTensor& img, std::size_t label,
                                                 LossKind kind) const {
  LossGradient out{forward(img), ImageTensor(input_, RangeTag::kByte)};
  const std::vector<double> dz = loss_logit_gradient(out.logits, label, kind);
  const std::size_t n = input_.size();
  for (std::size_t k = 0; k < dz.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) out.gradient[i] += dz[k] * weights_[k * n + i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// BuiltinCnn

namespace {

constexpr double kInputScale = 1.0 / 127.5;

// out[i,j,o] = b[o] + sum_{ky,kx,c} w[ky][kx][c][o] * in[i+ky-1, j+kx-1, c]
void conv3x3(const double* in, std::size_t h, std::size_t w, std::size_t cin, const double* weights,
             const double* bias, std::size_t cout, double* out) {
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double* o = out + (i * w + j) * cout;
      std::copy(bias, bias + cout, o);
      for (std::size_t ky = 0; ky < 3; ++ky) {
        if (i + ky < 1 || i + ky - 1 >= h) continue;
        const std::size_t ii = i + ky - 1;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          if (j + kx < 1 || j + kx - 1 >= w) continue;
          const std::size_t jj = j + kx - 1;
          const double* src = in + (ii * w + jj) * cin;
          const double* wk = weights + (ky * 3 + kx) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const double v = src[c];
            const double* wc = wk + c * cout;
            for (std::size_t q = 0; q < cout; ++q) o[q] += v * wc[q];
          }
        }
      }
    }
  }
}

// Gradient of conv3x3 w.r.t. its input.
void conv3x3_input_grad(const double* dout, std::size_t h, std::size_t w, std::size_t cin,
                        const double* weights, std::size_t cout, double* din) {
  std::fill(din, din + h * w * cin, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* g = dout + (i * w + j) * cout;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        if (i + ky < 1 || i + ky - 1 >= h) continue;
        const std::size_t ii = i + ky - 1;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          if (j + kx < 1 || j + kx - 1 >= w) continue;
          const std::size_t jj = j + kx - 1;
          double* dst = din + (ii * w + jj) * cin;
          const double* wk = weights + (ky * 3 + kx) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const double* wc = wk + c * cout;
            double s = 0.0;
            for (std::size_t q = 0; q < cout; ++q) s += g[q] * wc[q];
            dst[c] += s;
          }
        }
      }
    }
  }
}

// Accumulates the gradient of conv3x3 w.r.t. weights and bias.
void conv3x3_param_grad(const double* in, const double* dout, std::size_t h, std::size_t w,
                        std::size_t cin, std::size_t cout, double* dweights, double* dbias) {
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* g = dout + (i * w + j) * cout;
      for (std::size_t q = 0; q < cout; ++q) dbias[q] += g[q];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        if (i + ky < 1 || i + ky - 1 >= h) continue;
        const std::size_t ii = i + ky - 1;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          if (j + kx < 1 || j + kx - 1 >= w) continue;
          const std::size_t jj = j + kx - 1;
          const double* src = in + (ii * w + jj) * cin;
          double* dk = dweights + (ky * 3 + kx) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const double v = src[c];
            double* dc = dk + c * cout;
            for (std::size_t q = 0; q < cout; ++q) dc[q] += v * g[q];
          }
        }
      }
    }
  }
}

}  // namespace

struct BuiltinCnn::Activations {
  std::vector<double> input;  // scaled to [-1, 1]
  std::vector<double> a1;     // conv1 pre-activation, h x w x c1
  std::vector<double> p1;     // pooled ReLU(a1), h2 x w2 x c1
  std::vector<double> a2;     // conv2 pre-activation, h2 x w2 x c2
  std::vector<double> r2;     // ReLU(a2)
  std::vector<double> pooled; // c2
  std::vector<double> logits;
};

BuiltinCnn::Offsets BuiltinCnn::offsets_for(const CnnDims& d) {
  Offsets o{};
  o.conv1_w = 0;
  o.conv1_b = o.conv1_w + 9 * d.input.channels * d.conv1;
  o.conv2_w = o.conv1_b + d.conv1;
  o.conv2_b = o.conv2_w + 9 * d.conv1 * d.conv2;
  o.dense_w = o.conv2_b + d.conv2;
  o.dense_b = o.dense_w + d.conv2 * d.num_classes;
  o.end = o.dense_b + d.num_classes;
  return o;
}

std::size_t BuiltinCnn::parameter_count(const CnnDims& dims) { return offsets_for(dims).end; }

BuiltinCnn::BuiltinCnn(CnnDims dims) : dims_(dims), off_(offsets_for(dims)), params_(off_.end, 0.0) {
  if (dims.input.height < 2 || dims.input.width < 2 || dims.input.height % 2 != 0 ||
      dims.input.width % 2 != 0 || dims.input.channels == 0) {
    throw Error(ErrorCode::kInvalidArgument, "CNN input needs even, nonzero height and width");
  }
  if (dims.conv1 == 0 || dims.conv2 == 0) throw Error(ErrorCode::kInvalidArgument, "CNN needs nonzero channels");
  if (dims.num_classes < 2) throw Error(ErrorCode::kDegenerateClasses, "CNN needs at least two classes");
}

BuiltinCnn BuiltinCnn::initialized(CnnDims dims, std::uint64_t seed) {
  BuiltinCnn net(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](std::span<double> w, double fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : w) v = dist(rng);
  };
  fill(net.conv1_weights(), 9.0 * static_cast<double>(dims.input.channels));
  fill(net.conv2_weights(), 9.0 * static_cast<double>(dims.conv1));
  fill(net.dense_weights(), static_cast<double>(dims.conv2));
  return net;
}

std::span<double> BuiltinCnn::conv1_weights() { return std::span(params_).subspan(off_.conv1_w, off_.conv1_b - off_.conv1_w); }
std::span<double> BuiltinCnn::conv1_bias() { return std::span(params_).subspan(off_.conv1_b, off_.conv2_w - off_.conv1_b); }
std::span<double> BuiltinCnn::conv2_weights() { return std::span(params_).subspan(off_.conv2_w, off_.conv2_b - off_.conv2_w); }
std::span<double> BuiltinCnn::conv2_bias() { return std::span(params_).subspan(off_.conv2_b, off_.dense_w - off_.conv2_b); }
std::span<double> BuiltinCnn::dense_weights() { return std::span(params_).subspan(off_.dense_w, off_.dense_b - off_.dense_w); }
std::span<double> BuiltinCnn::dense_bias() { return std::span(params_).subspan(off_.dense_b, off_.end - off_.dense_b); }

void BuiltinCnn::check_input(const ImageTensor& img) const {
  if (img.shape() != dims_.input) throw Error(ErrorCode::kShapeMismatch, "input shape does not match the classifier");
}

void BuiltinCnn::run_forward(const ImageTensor& img, Activations& act) const {
  check_input(img);
  const std::size_t h = dims_.input.height, w = dims_.input.width, c = dims_.input.channels;
  const std::size_t h2 = h / 2, w2 = w / 2, c1 = dims_.conv1, c2 = dims_.conv2;
  const double* p = params_.data();

  act.input.resize(h * w * c);
  for (std::size_t i = 0; i < act.input.size(); ++i) act.input[i] = img[i] * kInputScale - 1.0;

  act.a1.resize(h * w * c1);
  conv3x3(act.input.data(), h, w, c, p + off_.conv1_w, p + off_.conv1_b, c1, act.a1.data());

  act.p1.assign(h2 * w2 * c1, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* src = act.a1.data() + (i * w + j) * c1;
      double* dst = act.p1.data() + ((i / 2) * w2 + j / 2) * c1;
      for (std::size_t q = 0; q < c1; ++q) dst[q] += 0.25 * std::max(src[q], 0.0);
    }
  }

  act.a2.resize(h2 * w2 * c2);
  conv3x3(act.p1.data(), h2, w2, c1, p + off_.conv2_w, p + off_.conv2_b, c2, act.a2.data());

  act.r2.resize(act.a2.size());
  act.pooled.assign(c2, 0.0);
  const double inv_area = 1.0 / static_cast<double>(h2 * w2);
  for (std::size_t s = 0; s < h2 * w2; ++s) {
    for (std::size_t q = 0; q < c2; ++q) {
      const double v = std::max(act.a2[s * c2 + q], 0.0);
      act.r2[s * c2 + q] = v;
      act.pooled[q] += v;
    }
  }
  for (double& v : act.pooled) v *= inv_area;

  const std::size_t k = dims_.num_classes;
  act.logits.assign(p + off_.dense_b, p + off_.dense_b + k);
  for (std::size_t y = 0; y < k; ++y) {
    const double* row = p + off_.dense_w + y * c2;
    for (std::size_t q = 0; q < c2; ++q) act.logits[y] += row[q] * act.pooled[q];
  }
}

void BuiltinCnn::backprop_head(const Activations& act, std::span<const double> dlogits,
                               std::vector<double>& da2) const {
  const std::size_t c2 = dims_.conv2, k = dims_.num_classes;
  const std::size_t area = (dims_.input.height / 2) * (dims_.input.width / 2);
  const double* dense = params_.data() + off_.dense_w;
  std::vector<double> dpooled(c2, 0.0);
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t q = 0; q < c2; ++q) dpooled[q] += dlogits[y] * dense[y * c2 + q];
  }
  const double inv_area = 1.0 / static_cast<double>(area);
  da2.resize(area * c2);
  for (std::size_t s = 0; s < area; ++s) {
    for (std::size_t q = 0; q < c2; ++q) {
      da2[s * c2 + q] = act.a2[s * c2 + q] > 0.0 ? dpooled[q] * inv_area : 0.0;
    }
  }
}

std::vector<double> BuiltinCnn::forward(const ImageTensor& img) const {
  Activations act;
  run_forward(img, act);
  return act.logits;
}

LossGradient BuiltinCnn::loss_and_gradient(const ImageTensor& img, std::size_t label, LossKind kind) const {
  Activations act;
  run_forward(img, act);
  const std::vector<double> dz = loss_logit_gradient(act.logits, label, kind);

  const std::size_t h = dims_.input.height, w = dims_.input.width, c = dims_.input.channels;
  const std::size_t h2 = h / 2, w2 = w / 2, c1 = dims_.conv1, c2 = dims_.conv2;
  std::vector<double> da2;
  backprop_head(act, dz, da2);

  std::vector<double> dp1(h2 * w2 * c1);
  conv3x3_input_grad(da2.data(), h2, w2, c1, params_.data() + off_.conv2_w, c2, dp1.data());

  std::vector<double> da1(h * w * c1);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* up = dp1.data() + ((i / 2) * w2 + j / 2) * c1;
      const std::size_t base = (i * w + j) * c1;
      for (std::size_t q = 0; q < c1; ++q) da1[base + q] = act.a1[base + q] > 0.0 ? 0.25 * up[q] : 0.0;
    }
  }

  LossGradient out{std::move(act.logits), ImageTensor(dims_.input, RangeTag::kByte)};
  conv3x3_input_grad(da1.data(), h, w, c, params_.data() + off_.conv1_w, c1, out.gradient.values().data());
  for (double& v : out.gradient.values()) v *= kInputScale;
  return out;
}

std::vector<double> BuiltinCnn::last_conv_activations(const ImageTensor& img) const {
  Activations act;
  run_forward(img, act);
  return act.r2;
}

std::optional<Mask> BuiltinCnn::cam_mask(const ImageTensor& img, std::size_t label) const {
  Activations act;
  run_forward(img, act);
  if (label >= dims_.num_classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
  const std::size_t h2 = dims_.input.height / 2, w2 = dims_.input.width / 2, c2 = dims_.conv2;
  // d logit_label / d A where A = ReLU(a2) is the activation map itself, so
  // the ReLU mask does not apply here.
  const double* dense = params_.data() + off_.dense_w;
  std::vector<double> weights(c2);
  const double inv_area = 1.0 / static_cast<double>(h2 * w2);
  for (std::size_t q = 0; q < c2; ++q) {
    // Spatial mean of a gradient that is constant over positions.
    weights[q] = dense[label * c2 + q] * inv_area;
  }
  return gradcam_from_activations(act.r2, h2, w2, weights, dims_.input.height, dims_.input.width);
}

double BuiltinCnn::accumulate_parameter_gradient(const ImageTensor& img, std::size_t label,
                                                 std::span<double> param_grad) const {
  if (param_grad.size() != params_.size()) throw Error(ErrorCode::kShapeMismatch, "parameter gradient size");
  Activations act;
  run_forward(img, act);
  const double loss = loss_value(act.logits, label, LossKind::kCrossEntropy);
  const std::vector<double> dz = loss_logit_gradient(act.logits, label, LossKind::kCrossEntropy);

  const std::size_t h = dims_.input.height, w = dims_.input.width, c = dims_.input.channels;
  const std::size_t h2 = h / 2, w2 = w / 2, c1 = dims_.conv1, c2 = dims_.conv2, k = dims_.num_classes;
  double* g = param_grad.data();

  for (std::size_t y = 0; y < k; ++y) {
    g[off_.dense_b + y] += dz[y];
    for (std::size_t q = 0; q < c2; ++q) g[off_.dense_w + y * c2 + q] += dz[y] * act.pooled[q];
  }

  std::vector<double> da2;
  backprop_head(act, dz, da2);
  conv3x3_param_grad(act.p1.data(), da2.data(), h2, w2, c1, c2, g + off_.conv2_w, g + off_.conv2_b);

  std::vector<double> dp1(h2 * w2 * c1);
  conv3x3_input_grad(da2.data(), h2, w2, c1, params_.data() + off_.conv2_w, c2, dp1.data());
  std::vector<double> da1(h * w * c1);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* up = dp1.data() + ((i / 2) * w2 + j / 2) * c1;
      const std::size_t base = (i * w + j) * c1;
      for (std::size_t q = 0; q < c1; ++q) da1[base + q] = act.a1[base + q] > 0.0 ? 0.25 * up[q] : 0.0;
    }
  }
  conv3x3_param_grad(act.input.data(), da1.data(), h, w, c, c1, g + off_.conv1_w, g + off_.conv1_b);
  return loss;
}

// ---------------------------------------------------------------------------
// checkpoint I/O

namespace {

constexpr std::array<char, 4> kModelMagic = {'A', 'D', 'V', 'M'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t pos) {
  if (pos + 4 > buf.size()) throw Error(ErrorCode::kMalformedHeader, "model file truncated");
  return static_cast<std::uint32_t>(buf[pos]) | (static_cast<std::uint32_t>(buf[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(buf[pos + 2]) << 16) | (static_cast<std::uint32_t>(buf[pos + 3]) << 24);
}

}  // namespace

// Layout: "ADVM", u32 version, u32 table length (6), then H, W, C, conv1,
// conv2, num_classes, u32 parameter count, binary32 parameters.
void save_model(const BuiltinCnn& model, const std::filesystem::path& path) {
  const CnnDims& d = model.dims();
  std::vector<unsigned char> buf(kModelMagic.begin(), kModelMagic.end());
  put_u32(buf, kModelVersion);
  put_u32(buf, 6);
  for (std::size_t v : {d.input.height, d.input.width, d.input.channels, d.conv1, d.conv2, d.num_classes}) {
    put_u32(buf, static_cast<std::uint32_t>(v));
  }
  put_u32(buf, static_cast<std::uint32_t>(model.parameters().size()));
  for (double v : model.parameters()) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

BuiltinCnn load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || !std::equal(kModelMagic.begin(), kModelMagic.end(), buf.begin())) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad magic");
  }
  if (get_u32(buf, 4) != kModelVersion) throw Error(ErrorCode::kMalformedHeader, path.string() + ": unsupported version");
  if (get_u32(buf, 8) != 6) throw Error(ErrorCode::kMalformedHeader, path.string() + ": unexpected dimension table");
  CnnDims d;
  d.input = {get_u32(buf, 12), get_u32(buf, 16), get_u32(buf, 20)};
  d.conv1 = get_u32(buf, 24);
  d.conv2 = get_u32(buf, 28);
  d.num_classes = get_u32(buf, 32);
  BuiltinCnn model(d);
  const std::uint32_t count = get_u32(buf, 36);
  if (count != model.parameters().size() || buf.size() != 40 + 4 * static_cast<std::size_t>(count)) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": parameter count does not match dimensions");
  }
  auto params = model.parameters();
  for (std::size_t i = 0; i < count; ++i) params[i] = std::bit_cast<float>(get_u32(buf, 40 + 4 * i));
  return model;
}

// ---------------------------------------------------------------------------
// training

double accuracy(const Classifier& model, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Sample& s : data.samples) correct += model.predict(s.image) == s.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_reference(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.empty()) throw Error(ErrorCode::kEmptyInput, "training set is empty");
  if (cfg.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  for (const Sample& s : train.samples) {
    if (s.label >= train.num_classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
  }
  CnnDims dims{train.samples.front().image.shape(), cfg.conv1, cfg.conv2, train.num_classes};
  TrainResult result{BuiltinCnn::initialized(dims, cfg.seed), 0.0, 0.0, {}};
  BuiltinCnn& net = result.model;

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(net.parameters().size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = train.samples[order[b]];
        loss_sum += net.accumulate_parameter_gradient(s.image, s.label, grad);
      }
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      auto params = net.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
    }
    const double mean_loss = loss_sum / static_cast<double>(train.size());
    if (!std::isfinite(mean_loss)) {
      throw Error(ErrorCode::kDivergence, "training loss became non-finite at epoch " + std::to_string(epoch));
    }
    EpochLog log{epoch, mean_loss, accuracy(net, train), accuracy(net, test)};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.train_accuracy = accuracy(net, train);
  result.test_accuracy = accuracy(net, test);
  return result;
}

}  // namespace advad
