#include "dualadapt/nn.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "dualadapt/error.hpp"
#include "dualadapt/random.hpp"

namespace dualadapt::nn {

using nlohmann::json;

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ParseError("unknown activation '" + s + "'");
}

std::size_t ModelParams::input_dim() const { return layers.empty() ? 0 : layers.front().in(); }

std::size_t ModelParams::output_dim() const { return layers.empty() ? 0 : layers.back().out(); }

std::uint64_t ModelParams::param_count() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.in() * l.out() + l.out();
  return n;
}

void ModelParams::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.out()) {
      throw ShapeError("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
    }
    if (i > 0 && layers[i - 1].out() != l.in()) {
      throw ShapeError("layer " + std::to_string(i) + " input " + std::to_string(l.in()) +
                       " does not chain with previous output " + std::to_string(layers[i - 1].out()));
    }
  }
}

void ModelConfig::validate() const {
  if (input_dim < 1 || feature_dim < 1) throw ContractError("model dims must be >= 1");
  if (num_classes < 2) throw ContractError("need at least two classes");
  for (auto w : g_hidden)
    if (w < 1) throw ContractError("hidden widths must be >= 1");
  for (auto w : f_hidden)
    if (w < 1) throw ContractError("hidden widths must be >= 1");
}

ModelParams init_dense(const std::vector<std::size_t>& widths, Activation act, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams m;
  m.activation = act;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i], out = widths[i + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor w(Shape{in, out});
    for (auto& v : w.values()) v = u(rng);
    m.layers.push_back(Layer{std::move(w), Tensor(Shape{out})});
  }
  return m;
}

Model init_model(const ModelConfig& config) {
  config.validate();
  std::vector<std::size_t> gw{config.input_dim};
  gw.insert(gw.end(), config.g_hidden.begin(), config.g_hidden.end());
  gw.push_back(config.feature_dim);
  std::vector<std::size_t> fw{config.feature_dim};
  fw.insert(fw.end(), config.f_hidden.begin(), config.f_hidden.end());
  fw.push_back(config.num_classes);
  return Model{init_dense(gw, config.activation, derive_seed(config.init_seed, {1})),
               init_dense(fw, config.activation, derive_seed(config.init_seed, {2}))};
}

namespace {

Tensor activate(Activation a, const Tensor& x) { return a == Activation::relu ? relu(x) : tanh(x); }

Var activate(Activation a, Var x) { return a == Activation::relu ? relu(x) : tanh(x); }

Tensor run_plain(const ModelParams& m, const Tensor& x) {
  if (m.layers.empty()) return x;
  if (x.rank() != 2 || x.cols() != m.input_dim()) {
    throw ShapeError("model expects input width " + std::to_string(m.input_dim()) + ", got " +
                     shape_string(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    h = add_row_vector(matmul(h, m.layers[i].weight), m.layers[i].bias);
    if (i + 1 < m.layers.size()) h = activate(m.activation, h);
  }
  return h;
}

}  // namespace

Tensor forward_features(const ModelParams& g, const Tensor& x) { return run_plain(g, x); }

Tensor forward_logits(const ModelParams& f, const Tensor& z) { return run_plain(f, z); }

Tensor forward_classifier(const ModelParams& f, const Tensor& z) {
  if (z.rank() == 2 && z.rows() == 0) return Tensor(Shape{0, f.output_dim()});
  return softmax(forward_logits(f, z));
}

ModelParams clone_classifier(const ModelParams& f) { return f; }

std::uint64_t layer_flops(const Layer& layer, bool activated) {
  const std::uint64_t in = layer.in(), out = layer.out();
  return 2 * in * out + out + (activated ? out : 0);
}

std::vector<Var> TracedModel::vars() const {
  std::vector<Var> out;
  out.reserve(weights.size() * 2);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

TracedModel trace(Tape& tape, const ModelParams& params, bool trainable) {
  TracedModel t;
  t.params = &params;
  for (const auto& l : params.layers) {
    t.weights.push_back(trainable ? tape.leaf(l.weight) : tape.constant(l.weight));
    t.biases.push_back(trainable ? tape.leaf(l.bias) : tape.constant(l.bias));
  }
  return t;
}

TracedModel detach(const TracedModel& model) {
  TracedModel out;
  out.params = model.params;
  for (Var w : model.weights) out.weights.push_back(stop_gradient(w));
  for (Var b : model.biases) out.biases.push_back(stop_gradient(b));
  return out;
}

Var forward(const TracedModel& model, Var x, FlopCounter* counter) {
  const ModelParams& m = *model.params;
  if (!m.layers.empty() && (x.value().rank() != 2 || x.value().cols() != m.input_dim())) {
    throw ShapeError("model expects input width " + std::to_string(m.input_dim()) + ", got " +
                     shape_string(x.value().shape()));
  }
  Var h = x;
  const std::uint64_t rows = m.layers.empty() ? 0 : x.value().rows();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const bool activated = i + 1 < m.layers.size();
    h = add_row_vector(matmul(h, model.weights[i]), model.biases[i]);
    if (activated) h = activate(m.activation, h);
    if (counter) {
      const std::uint64_t cost = rows * layer_flops(m.layers[i], activated);
      counter->add(cost);
      h.tape->charge_backward(h, cost);
    }
  }
  return h;
}

Var classify(const TracedModel& model, Var z, FlopCounter* counter) {
  return softmax(forward(model, z, counter));
}

std::vector<Tensor*> parameter_tensors(ModelParams& params) {
  std::vector<Tensor*> out;
  for (auto& l : params.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

json to_json(const ModelParams& params) {
  json layers = json::array();
  for (const auto& l : params.layers) {
    json rows = json::array();
    for (std::size_t i = 0; i < l.in(); ++i) {
      auto r = l.weight.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    auto b = l.bias.values();
    layers.push_back(json::array({rows, std::vector<double>(b.begin(), b.end())}));
  }
  return json{{"activation", to_string(params.activation)}, {"layers", layers}};
}

ModelParams model_from_json(const json& j) {
  try {
    ModelParams m;
    m.activation = activation_from_string(j.at("activation").get<std::string>());
    for (const auto& layer : j.at("layers")) {
      if (!layer.is_array() || layer.size() != 2) throw ParseError("layer must be [weights, bias]");
      const auto& rows = layer[0];
      const std::size_t in = rows.size();
      const std::size_t out = in ? rows[0].size() : 0;
      std::vector<double> w;
      w.reserve(in * out);
      for (const auto& r : rows) {
        if (r.size() != out) throw ParseError("ragged weight rows");
        for (const auto& v : r) w.push_back(v.get<double>());
      }
      auto b = layer[1].get<std::vector<double>>();
      m.layers.push_back(Layer{Tensor(Shape{in, out}, std::move(w)), Tensor::vector(std::move(b))});
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model json: ") + e.what());
  }
}

json to_json(const ModelConfig& c) {
  return json{{"input_dim", c.input_dim},   {"feature_dim", c.feature_dim},
              {"num_classes", c.num_classes}, {"g_hidden", c.g_hidden},
              {"f_hidden", c.f_hidden},       {"activation", to_string(c.activation)},
              {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.g_hidden = j.value("g_hidden", c.g_hidden);
    c.f_hidden = j.value("f_hidden", c.f_hidden);
    c.activation = activation_from_string(j.value("activation", std::string("relu")));
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const Model& model) {
  json j{{"config", to_json(config)},
         {"feature_extractor", to_json(model.feature_extractor)},
         {"classifier", to_json(model.classifier)}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump() << '\n';
}

std::pair<ModelConfig, Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return {model_config_from_json(j.at("config")),
          Model{model_from_json(j.at("feature_extractor")), model_from_json(j.at("classifier"))}};
}

}  // namespace dualadapt::nn
