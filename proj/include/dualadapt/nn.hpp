#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualadapt/tape.hpp"
#include "dualadapt/tensor.hpp"

namespace dualadapt::nn {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  std::size_t in() const { return weight.shape()[0]; }
  std::size_t out() const { return weight.shape()[1]; }
  friend bool operator==(const Layer&, const Layer&) = default;
};

// Dense network. The activation is applied between layers, never after the last one.
struct ModelParams {
  std::vector<Layer> layers;
  Activation activation = Activation::relu;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::uint64_t param_count() const;
  // Throws ShapeError if consecutive layers do not chain.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ModelConfig {
  std::size_t input_dim = 16;
  std::size_t feature_dim = 32;
  std::size_t num_classes = 4;
  std::vector<std::size_t> g_hidden{64};
  std::vector<std::size_t> f_hidden{};
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;

  void validate() const;
};

struct Model {
  ModelParams feature_extractor;  // G
  ModelParams classifier;         // F
};

// Glorot-uniform weights, zero biases. Bit-identical for equal configs.
Model init_model(const ModelConfig& config);
// A single dense stack with the given layer widths, initialized like init_model.
ModelParams init_dense(const std::vector<std::size_t>& widths, Activation act, std::uint64_t seed);

Tensor forward_features(const ModelParams& g, const Tensor& x);
Tensor forward_logits(const ModelParams& f, const Tensor& z);
// Softmax probabilities, one row per example.
Tensor forward_classifier(const ModelParams& f, const Tensor& z);

ModelParams clone_classifier(const ModelParams& f);

// Per-example forward cost of one layer: 2*in*out multiply-adds, out bias adds,
// plus out activation evaluations when the layer is followed by an activation.
std::uint64_t layer_flops(const Layer& layer, bool activated);

// Parameters of a model recorded on a tape. Trainable parameters are leaves;
// frozen ones are constants, so no gradient ever reaches them.
struct TracedModel {
  const ModelParams* params = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;

  // weights and biases interleaved: w0, b0, w1, b1, ...
  std::vector<Var> vars() const;
};

TracedModel trace(Tape& tape, const ModelParams& params, bool trainable);

// Same parameters routed through stop_gradient: usable in a forward pass, never
// receives gradient.
TracedModel detach(const TracedModel& model);

// Traced forward pass. When `counter` is set, forward FLOPs are charged now and
// each layer charges the same amount again if backward passes through it.
Var forward(const TracedModel& model, Var x, FlopCounter* counter = nullptr);
Var classify(const TracedModel& model, Var z, FlopCounter* counter = nullptr);

// Flat views in the same order as TracedModel::vars().
std::vector<Tensor*> parameter_tensors(ModelParams& params);

// Wire/checkpoint encoding: {"activation", "layers": [[weight rows], [bias]]...}.
// Only the numbers inside "layers" are parameters.
nlohmann::json to_json(const ModelParams& params);
ModelParams model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Checkpoint file: {"config": {...}, "feature_extractor": ..., "classifier": ...}.
void save_checkpoint(const std::string& path, const ModelConfig& config, const Model& model);
std::pair<ModelConfig, Model> load_checkpoint(const std::string& path);

}  // namespace dualadapt::nn
