#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualadapt/costs.hpp"
#include "dualadapt/data.hpp"
#include "dualadapt/density.hpp"
#include "dualadapt/losses.hpp"
#include "dualadapt/nn.hpp"

namespace dualadapt::federation {

enum class Method {
  source_only,
  dualadapt,
  fed_mcd,
  fed_oracle,
  cent_mcd_one2one,
  cent_mcd_one2combined,
  cent_mcd_one2multiple,
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct TrainConfig {
  std::size_t rounds = 10;
  std::size_t client_iters = 20;  // R_c
  std::size_t server_iters = 20;  // R_s
  std::size_t client_batch = 32;
  std::size_t server_batch = 32;
  double client_lr = 0.01;
  double server_lr = 0.005;
  double server_momentum = 0.9;
  std::size_t pretrain_epochs = 30;
  std::size_t pretrain_batch = 32;
  double pretrain_lr = 0.01;

  losses::LossConfig loss;
  density::GmmOptions gmm;
  nn::ModelConfig model;  // input_dim and num_classes are taken from the data

  // Keep each client's local classifier across rounds; otherwise re-clone F_g every round.
  bool persist_local_classifier = true;
  // Ablation switches: the pseudo-label term on clients, and GMM weighting on both sides.
  bool self_training = true;
  bool gmm_weighting = true;
  // Let the proxy alignment step move F_g as well as G.
  bool proxy_updates_global_classifier = false;
  bool parallel_clients = false;

  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Velocity buffers matching nn::parameter_tensors order.
struct Velocity {
  std::vector<Tensor> v;
};

void sgd_step(nn::ModelParams& params, std::span<const Tensor> grads, double lr);
void momentum_step(nn::ModelParams& params, std::span<const Tensor> grads, Velocity& velocity, double lr,
                   double momentum);

// Everything the server holds. There is deliberately no slot for target data.
struct ServerState {
  nn::ModelParams g;
  nn::ModelParams f_g;
  std::optional<density::GmmParams> w_s;
  data::DomainShard source;
  std::size_t num_classes = 0;
  Velocity adapt_velocity_g;     // proxy alignment step
  Velocity adapt_velocity_f;     // only used when the alignment step moves F_g
  Velocity finetune_velocity_g;  // supervised fine-tuning step
  Velocity finetune_velocity_f;
};

struct ClientState {
  std::size_t id = 0;
  data::DomainShard target;  // unlabeled
  std::optional<nn::ModelParams> f_l;
  std::optional<density::GmmParams> w_t;
};

struct BroadcastMsg {
  nn::ModelParams g;
  nn::ModelParams f_g;
  std::optional<density::GmmParams> w_s;

  std::uint64_t param_count() const;
};

struct UploadMsg {
  std::size_t client_id = 0;
  nn::ModelParams f_l;
  std::optional<density::GmmParams> w_t;

  std::uint64_t param_count() const;
};

// Wire encoding: {"kind", "round", ["client"], "params": {...}}. Only numbers under
// "params" are model parameters.
nlohmann::json to_wire(const BroadcastMsg& msg, std::size_t round);
nlohmann::json to_wire(const UploadMsg& msg, std::size_t round);
BroadcastMsg broadcast_from_wire(const nlohmann::json& j);
UploadMsg upload_from_wire(const nlohmann::json& j);
std::uint64_t wire_param_count(const nlohmann::json& payload);

struct WireEvent {
  enum class Direction { broadcast, upload };
  Direction direction = Direction::broadcast;
  std::size_t round = 0;
  std::size_t client = 0;
  std::string payload;
  std::uint64_t param_count = 0;
};

struct RunHooks {
  std::function<void(const WireEvent&)> on_wire;
  // Execution order of clients inside a round; empty means 0..N-1.
  std::vector<std::size_t> client_order;
};

ServerState make_server(const data::DomainShard& source, std::size_t num_classes, const TrainConfig& cfg);

// Mini-batch cross-entropy on the labeled source.
void pretrain(ServerState& server, std::size_t epochs, const TrainConfig& cfg);

struct ClientRoundResult {
  UploadMsg upload;
  std::uint64_t flops = 0;
  std::uint64_t examples = 0;
  double mean_objective = 0.0;
};

ClientRoundResult client_round(ClientState& client, const BroadcastMsg& msg, std::size_t client_iters,
                               const TrainConfig& cfg, std::size_t round);

struct ServerRoundResult {
  std::uint64_t flops = 0;
  double mean_objective = 0.0;
};

ServerRoundResult server_round(ServerState& server, std::span<const UploadMsg> uploads, std::size_t server_iters,
                               const TrainConfig& cfg, std::size_t round);

// Alignment on real target batches instead of the weighted proxy. Reads client
// data on the server, so runs using it are flagged privacy_violating.
ServerRoundResult oracle_server_round(ServerState& server, std::span<const UploadMsg> uploads,
                                      std::span<const data::DomainShard> target_trains, std::size_t server_iters,
                                      const TrainConfig& cfg, std::size_t round);

// The traced objectives behind client_round and server_round, exposed for
// gradient checks. Frozen pathways are cut with stop_gradient inside, so
// callers may trace every model as trainable and still see zero gradient there.
//
// Client: features and F_g are frozen; only f_l receives gradient. The batch
// features are copied to features_out when given.
Var client_step_objective(const nn::TracedModel& g, const nn::TracedModel& f_g, const nn::TracedModel& f_l, Var x,
                          const density::GmmParams* w_s, const losses::LossConfig& loss,
                          FlopCounter* counter = nullptr, Tensor* features_out = nullptr);

struct ProxyClientView {
  const nn::TracedModel* f_l = nullptr;
  Tensor weights;  // w_T^i on the batch
  Var inputs;      // batch the term is evaluated on
};

// Server: classifiers are frozen (F_g optionally trainable); only g receives gradient.
// Clients sharing the same inputs Var share one feature pass.
Var server_step_objective(const nn::TracedModel& g, const nn::TracedModel& f_g,
                          std::span<const ProxyClientView> clients, bool update_global_classifier,
                          FlopCounter* counter = nullptr);

// Ensemble of global and local classifiers.
struct EnsembleModel {
  nn::ModelParams g;
  nn::ModelParams f_g;
  std::vector<nn::ModelParams> local;  // indexed by client id
};

struct Prediction {
  Tensor probs;  // [n, C]
  std::vector<std::size_t> labels;
};

Prediction predict(const EnsembleModel& model, const Tensor& x, std::size_t client);

// Feature extractor plus classifier heads whose probabilities are averaged.
struct TargetModel {
  nn::ModelParams g;
  std::vector<nn::ModelParams> heads;
};

Prediction predict(const TargetModel& model, const Tensor& x);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

struct Evaluation {
  double source_accuracy = 0.0;
  std::vector<double> per_target_accuracy;
  double mean_accuracy = 0.0;
};

// models[i] is evaluated on targets[i].test; source_model on the source test shard.
Evaluation evaluate(const TargetModel& source_model, std::span<const TargetModel> models,
                    const data::Benchmark& bench);

struct RoundRecord {
  std::size_t round = 0;
  Evaluation eval;
  std::vector<std::uint64_t> client_flops;
  std::uint64_t server_flops = 0;
  std::uint64_t upload_params = 0;
  std::uint64_t broadcast_params = 0;
  std::vector<double> client_objective;
  double server_objective = 0.0;
};

struct TrainReport {
  std::string method;
  std::uint64_t seed = 0;
  bool privacy_violating = false;
  nlohmann::json config;
  costs::ModuleCost feature_extractor_cost;
  costs::ModuleCost classifier_cost;
  Evaluation pretrain;
  std::vector<RoundRecord> rounds;
  Evaluation final_eval;
  costs::CostLedger ledger;

  nlohmann::json to_json() const;
  std::string dump() const;
};

TrainReport report_from_json(const nlohmann::json& j);

struct RunResult {
  TrainReport report;
  std::vector<TargetModel> models;  // final model per target
  TargetModel source_model;
};

RunResult run_dualadapt(const TrainConfig& cfg, const data::Benchmark& bench, const RunHooks& hooks = {});
RunResult run_baseline(Method kind, const TrainConfig& cfg, const data::Benchmark& bench, const RunHooks& hooks = {});
// Dispatches to run_dualadapt or run_baseline.
RunResult run_method(Method method, const TrainConfig& cfg, const data::Benchmark& bench, const RunHooks& hooks = {});

}  // namespace dualadapt::federation
