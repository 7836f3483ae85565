#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tnd/tensor.hpp"
#include "tnd/trigger.hpp"

namespace tnd {

enum class LayerKind { conv2d, relu, max_pool, flatten, dense };
enum class Padding { valid, same };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Static description of one layer. Conv2d is stride 1 with a square kernel; max-pool is 2x2 stride 2.
/// `input_scale` multiplies the layer input before the affine map, which is how a model normalises
/// [0, 255] pixels internally.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  Padding padding = Padding::valid;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  double input_scale = 1.0;

  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          Padding padding = Padding::same, double input_scale = 1.0);
  static LayerSpec relu();
  static LayerSpec max_pool();
  static LayerSpec flatten();
  static LayerSpec dense(std::size_t in_features, std::size_t out_features, double input_scale = 1.0);

  bool has_parameters() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // conv: (out, in, k, k); dense: (out, in)
  Tensor bias;    // (out)
  Shape input_shape;
  Shape output_shape;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Architecture plus weights. Immutable once built; detectors only ever see this type.
class Network {
 public:
  Network() = default;
  /// Zero-initialised parameters. Throws ShapeError naming the first layer that does not chain.
  Network(Shape input_shape, const std::vector<LayerSpec>& specs);

  /// He-normal weights, zero biases, deterministic in `seed`.
  static Network initialized(Shape input_shape, const std::vector<LayerSpec>& specs, std::uint64_t seed);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  /// Width d of the representation r(x): the input of the final fully-connected layer.
  std::size_t penultimate_dim() const noexcept { return penultimate_dim_; }
  /// Index of the final dense layer; r(x) is the activation entering it.
  std::size_t representation_layer() const noexcept { return representation_layer_; }
  std::size_t parameter_count() const noexcept;

  /// Replaces one layer's parameters (shapes must match). Used by training and deserialisation.
  void set_parameters(std::size_t layer, Tensor weight, Tensor bias);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::size_t num_classes_ = 0;
  std::size_t penultimate_dim_ = 0;
  std::size_t representation_layer_ = 0;
};

/// The small CNN used throughout: conv-relu-pool x2, hidden dense + relu (r(x), width `hidden`), output dense.
std::vector<LayerSpec> desk_cnn_layers(const Shape& input_shape, std::size_t num_classes, std::size_t conv1 = 8,
                                       std::size_t conv2 = 16, std::size_t hidden = 64);

struct ForwardTrace {
  Tensor logits;
  Tensor representation;
  /// activations[i] is the input of layer i; activations.back() holds the logits.
  std::vector<Tensor> activations;
};

ForwardTrace forward(const Network& net, const Tensor& x);
/// Logits only, without keeping the trace.
Tensor predict_logits(const Network& net, const Tensor& x);
std::size_t predict(const Network& net, const Tensor& x);

/// Per-layer parameter gradients (empty tensors for parameterless layers).
struct ParameterGradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static ParameterGradients zeros_like(const Network& net);
};

/// Reverse pass. `d_logits` seeds the output, `d_representation` (optional, may be empty) is added
/// where r(x) is produced. Accumulates into `grads` when given. Returns dF/dx (empty if
/// `need_input_gradient` is false). Relu(0) and pooling ties take the zero branch / first argmax.
Tensor backward(const Network& net, const ForwardTrace& trace, std::span<const double> d_logits,
                std::span<const double> d_representation, ParameterGradients* grads = nullptr,
                bool need_input_gradient = true);

struct HeadValue {
  double value = 0.0;
  std::vector<double> d_logits;
  std::vector<double> d_representation;
};

/// Scalar objective over (logits, representation) and its partial derivatives.
using ScalarHead = std::function<HeadValue(std::span<const double> logits, std::span<const double> representation)>;

struct InputGradient {
  double value = 0.0;
  Tensor gradient;
  ForwardTrace trace;
};

InputGradient input_gradient(const Network& net, const Tensor& x, const ScalarHead& head);

namespace heads {
ScalarHead logit(std::size_t index);
/// sum_i w_i r_i(x)
ScalarHead weighted_activation(std::vector<double> weights);
ScalarHead sum_representation();
/// Targeted hinge max{max_{t != target} f_t - f_target, -tau}.
ScalarHead cw_targeted(std::size_t target, double tau);
/// Untargeted hinge max{f_y - max_{t != y} f_t, -tau}.
ScalarHead cw_untargeted(std::size_t label, double tau);
}  // namespace heads

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Network network;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Minibatch SGD with momentum on softmax cross-entropy. `images` is (N, C, H, W). Deterministic in
/// cfg.seed. Throws NumericalError if the loss becomes non-finite.
TrainResult train(const Network& initial, const Tensor& images, std::span<const int> labels, const TrainConfig& cfg);

double accuracy(const Network& net, const Tensor& images, std::span<const int> labels);

/// Copies sample `i` of an (N, C, H, W) batch.
Tensor sample(const Tensor& batch, std::size_t i);

struct TrojanAttack {
  TriggerParams trigger;
  int target_label = 0;
  friend bool operator==(const TrojanAttack&, const TrojanAttack&) = default;
};

/// Ground truth. Read only by the evaluation harness.
struct Provenance {
  std::vector<TrojanAttack> attacks;
  double poison_ratio = 0.0;

  bool is_trojan() const noexcept { return !attacks.empty(); }
  std::vector<int> target_labels() const;
  friend bool operator==(const Provenance& a, const Provenance& b) {
    return a.attacks == b.attacks && a.poison_ratio == b.poison_ratio;
  }
};

struct ModelBundle {
  std::string model_id;
  Network network;
  Provenance provenance;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

}  // namespace tnd
