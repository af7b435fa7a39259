#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roomabs/core.hpp"

namespace roomabs::nn {

enum class LayerKind { kDense, kConv1d, kMaxPool, kElu, kSigmoid, kRelu, kFlatten };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  std::size_t size = 0;   // dense: outputs; conv: filters; pool: width
  std::size_t width = 0;  // conv kernel width (odd)

  static LayerSpec dense(std::size_t out) { return {LayerKind::kDense, out, 0}; }
  static LayerSpec conv1d(std::size_t filters, std::size_t width) {
    return {LayerKind::kConv1d, filters, width};
  }
  static LayerSpec maxpool(std::size_t width) { return {LayerKind::kMaxPool, width, 0}; }
  static LayerSpec elu() { return {LayerKind::kElu, 0, 0}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid, 0, 0}; }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class OutputHead {
  kAlpha,                // sigmoid, 6 outputs
  kInverseAlpha,         // relu, 6 outputs (1 / alpha_bar)
  kAlphaAndScattering,   // sigmoid, 12 outputs
};

std::string_view head_name(OutputHead h);
OutputHead head_from_name(std::string_view name);
std::size_t head_dim(OutputHead h);

struct ModelSpec {
  std::string name;
  std::vector<LayerSpec> hidden;  // everything before the output dense layer
  OutputHead head = OutputHead::kAlpha;
  std::size_t input_dim = 8000;

  // hidden + dense(head_dim) + head activation.
  std::vector<LayerSpec> layers() const;

  static ModelSpec mlp(OutputHead head = OutputHead::kAlpha, std::size_t input_dim = 8000);
  static ModelSpec cnn(OutputHead head = OutputHead::kAlpha, std::size_t input_dim = 8000);
};

// Activation shape: channels x length. Flat vectors have one channel.
struct Shape {
  std::size_t channels = 1;
  std::size_t length = 0;
  std::size_t size() const { return channels * length; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Shape after every layer, input first. Throws ShapeMismatch on an invalid
// stack (even conv width, pool width not dividing the length, dense on an
// unflattened input).
std::vector<Shape> shape_trace(const ModelSpec& spec);

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Parameter {
  std::string name;
  Tensor value;
};

struct TrainConfig {
  std::size_t batch_size = 1000;
  double learning_rate = 0.001;
  std::size_t epochs = 400;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct Provenance {
  TrainConfig train;
  std::string dataset_fingerprint;
  std::size_t best_epoch = 0;
  double dev_loss = 0.0;
  std::string config;  // free-form run configuration echo
};

struct Model {
  ModelSpec spec;
  std::vector<Parameter> params;  // in layer order, weight then bias
  Provenance provenance;

  // Seeded uniform fan-in initialization, bound sqrt(6 / fan_in) for weights,
  // zero biases.
  static Model initialize(const ModelSpec& spec, std::uint64_t seed);
  std::size_t parameter_count() const;
};

// A batch of equally sized samples stored row-major.
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const float> values;
};

// Forward pass: rows x input_dim -> rows x head_dim.
std::vector<float> forward(const Model& model, const Batch& inputs);

struct Gradients {
  std::vector<std::vector<float>> params;  // aligned with Model::params
  double loss = 0.0;                       // mean squared error
};

// MSE loss mean(y - t)^2 over rows and outputs, and its exact gradient with
// respect to every parameter.
Gradients backward(const Model& model, const Batch& inputs, const Batch& targets);

// Same in double precision with explicit parameter values (used by the
// finite-difference checks).
struct GradientsDouble {
  std::vector<std::vector<double>> params;
  double loss = 0.0;
};
GradientsDouble backward_double(const ModelSpec& spec,
                                const std::vector<std::vector<double>>& params,
                                std::span<const double> inputs, std::span<const double> targets,
                                std::size_t rows);
double loss_double(const ModelSpec& spec, const std::vector<std::vector<double>>& params,
                   std::span<const double> inputs, std::span<const double> targets,
                   std::size_t rows);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::size_t step = 0;
};

AdamState adam_init(const Model& model);

// One bias-corrected ADAM update; t = state.step + 1.
void adam_step(Model& model, AdamState& state, const Gradients& grads, const TrainConfig& config);

// In-memory training data.
struct Samples {
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
  std::vector<float> inputs;   // n x input_dim
  std::vector<float> targets;  // n x target_dim
  std::string fingerprint;

  std::size_t size() const { return input_dim ? inputs.size() / input_dim : 0; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  Model model;  // parameters from the best dev epoch
  std::vector<EpochRecord> curve;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Throws EmptyInput on empty sets, ShapeMismatch on dimension mismatches and
// Divergence when a loss becomes non-finite.
TrainResult train(const ModelSpec& spec, const Samples& train_set, const Samples& dev_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

double evaluate_loss(const Model& model, const Samples& set);

// Maps the raw network output to the six mean absorption coefficients. The
// inverse head reports 1/output clamped to [0,1].
BandValues predict(const Model& model, std::span<const float> input);
std::vector<BandValues> predict_batch(const Model& model, const Batch& inputs);

// Training target for a label under the given head.
std::vector<float> make_target(OutputHead head, const BandValues& alpha_bar,
                               const BandValues& s_bar);

void save_model(const Model& model, const std::filesystem::path& path);
// Throws CorruptFile (with byte offsets) on malformed files and ShapeMismatch
// when tensors disagree with the architecture or with expected_input_dim.
Model load_model(const std::filesystem::path& path,
                 std::optional<std::size_t> expected_input_dim = std::nullopt);

}  // namespace roomabs::nn
