#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "advad/image.hpp"

namespace advad {

struct Dataset;

enum class LossKind {
  kLog1mp,        // log(1 - p_y): the guidance objective
  kCrossEntropy,  // -log(p_y): the PGD objective
};

/// p_y under a max-shifted softmax; always finite for finite logits.
double softmax_prob(std::span<const double> logits, std::size_t label);
std::vector<double> softmax(std::span<const double> logits);

/// log(1 - p_y) in the form log(sum_{k != y} e^{z_k - m}) - log(sum_k e^{z_k - m}).
/// Throws kDegenerateClasses for fewer than two classes.
double log_one_minus_p(std::span<const double> logits, std::size_t label);

double loss_value(std::span<const double> logits, std::size_t label, LossKind kind);

/// d loss / d logits for the given loss kind.
std::vector<double> loss_logit_gradient(std::span<const double> logits, std::size_t label,
                                        LossKind kind);

std::size_t argmax(std::span<const double> values);

/// H x W weights in [0, 1], broadcast across channels.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

struct LossGradient {
  std::vector<double> logits;
  ImageTensor gradient;  // d loss / d input, in byte units
};

/// The attacked model. Inputs are Byte-range tensors; all methods are const
/// and safe to call concurrently.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::size_t num_classes() const = 0;
  virtual Shape input_shape() const = 0;
  virtual std::vector<double> forward(const ImageTensor& img) const = 0;

  /// Logits plus the exact gradient of the chosen loss w.r.t. every input value.
  virtual LossGradient loss_and_gradient(const ImageTensor& img, std::size_t label,
                                         LossKind kind) const = 0;

  /// Grad-CAM style mask, or nullopt when the model exposes no activations.
  virtual std::optional<Mask> cam_mask(const ImageTensor& img, std::size_t label) const;

  std::size_t predict(const ImageTensor& img) const { return argmax(forward(img)); }
};

/// Shape-checked gradient of `kind` w.r.t. the input (kShapeMismatch otherwise).
ImageTensor input_gradient(const Classifier& model, const ImageTensor& img, std::size_t label,
                           LossKind kind);

/// Throws kNoCamSupport for classifiers without activation access.
Mask gradcam_mask(const Classifier& model, const ImageTensor& img, std::size_t label);

/// ReLU(sum_k weights[k] * A_k) over an h x w x k activation block, bilinearly
/// upsampled (half-pixel centers) to out_h x out_w and min-max normalized.
/// A map with zero maximum normalizes to all zeros; a constant positive map
/// to all ones.
Mask gradcam_from_activations(std::span<const double> activations, std::size_t act_h,
                              std::size_t act_w, std::span<const double> channel_weights,
                              std::size_t out_h, std::size_t out_w);

/// z = W x + b over the flattened byte-range input. No CAM support.
class LinearClassifier final : public Classifier {
 public:
  LinearClassifier(Shape input, std::size_t num_classes, std::vector<double> weights,
                   std::vector<double> bias);

  std::size_t num_classes() const override { return bias_.size(); }
  Shape input_shape() const override { return input_; }
  std::vector<double> forward(const ImageTensor& img) const override;
  LossGradient loss_and_gradient(const ImageTensor& img, std::size_t label,
                                 LossKind kind) const override;

 private:
  Shape input_;
  std::vector<double> weights_;  // num_classes x input.size(), row-major
  std::vector<double> bias_;
};

struct CnnDims {
  Shape input{32, 32, 3};
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t num_classes = 2;

  friend bool operator==(const CnnDims&, const CnnDims&) = default;
};

/// conv3x3(C->conv1) -> ReLU -> avgpool2 -> conv3x3(conv1->conv2) -> ReLU
/// -> global average pool -> dense(conv2->K).
///
/// The input is mapped to [-1, 1] inside the network. Parameters live in one
/// flat array in this order: conv1 weights [ky][kx][in][out], conv1 bias,
/// conv2 weights [ky][kx][in][out], conv2 bias, dense weights [class][in],
/// dense bias. That gives 9*C*c1 + c1 + 9*c1*c2 + c2 + c2*K + K parameters
/// (1426 for the default 3->8->16->2 network).
class BuiltinCnn final : public Classifier {
 public:
  explicit BuiltinCnn(CnnDims dims);

  /// He-normal weights, zero biases.
  static BuiltinCnn initialized(CnnDims dims, std::uint64_t seed);

  static std::size_t parameter_count(const CnnDims& dims);

  const CnnDims& dims() const { return dims_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::span<double> conv1_weights();
  std::span<double> conv1_bias();
  std::span<double> conv2_weights();
  std::span<double> conv2_bias();
  std::span<double> dense_weights();
  std::span<double> dense_bias();

  std::size_t num_classes() const override { return dims_.num_classes; }
  Shape input_shape() const override { return dims_.input; }
  std::vector<double> forward(const ImageTensor& img) const override;
  LossGradient loss_and_gradient(const ImageTensor& img, std::size_t label,
                                 LossKind kind) const override;
  std::optional<Mask> cam_mask(const ImageTensor& img, std::size_t label) const override;

  /// Activations of the last convolution (after ReLU), h/2 x w/2 x conv2.
  std::vector<double> last_conv_activations(const ImageTensor& img) const;

  /// Cross-entropy loss and its gradient w.r.t. the parameters, accumulated
  /// into `param_grad` (same layout as parameters()). Returns the loss.
  double accumulate_parameter_gradient(const ImageTensor& img, std::size_t label,
                                       std::span<double> param_grad) const;

  /// Same dimensions and bit-identical parameters.
  friend bool operator==(const BuiltinCnn& a, const BuiltinCnn& b) {
    return a.dims_ == b.dims_ && a.params_ == b.params_;
  }

 private:
  struct Activations;
  struct Offsets {
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b, end;
  };

  static Offsets offsets_for(const CnnDims& dims);
  void check_input(const ImageTensor& img) const;
  void run_forward(const ImageTensor& img, Activations& act) const;
  /// Backprop d loss/d logits to the last conv pre-activation gradient.
  void backprop_head(const Activations& act, std::span<const double> dlogits,
                     std::vector<double>& da2) const;

  CnnDims dims_;
  Offsets off_;
  std::vector<double> params_;
};

void save_model(const BuiltinCnn& model, const std::filesystem::path& path);
BuiltinCnn load_model(const std::filesystem::path& path);

struct TrainConfig {
  std::size_t epochs = 12;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  BuiltinCnn model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<EpochLog> history;
};

double accuracy(const Classifier& model, const Dataset& data);

/// Mini-batch gradient descent on cross-entropy. Deterministic given the
/// seed. Throws kEmptyInput for an empty training set and kDivergence when the
/// loss becomes non-finite. `on_epoch` (optional) sees every epoch's log.
TrainResult train_reference(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace advad
