#include "dualadapt/federation.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <numeric>

#include "dualadapt/error.hpp"
#include "dualadapt/proxy.hpp"
#include "dualadapt/random.hpp"

namespace dualadapt::federation {

using nlohmann::json;
using data::Benchmark;
using data::DomainShard;
using nn::ModelParams;

namespace {

// RNG stream tags. Every random draw in a run hangs off (seed, tag, ...).
enum Stream : std::uint64_t {
  kInit = 1,
  kPretrain,
  kGmmSource,
  kClient,
  kGmmTarget,
  kServer,
  kProxy,
  kOracle,
  kMcd,
  kMcdInit,
};

// Epoch-style sampling without replacement; reshuffles when exhausted.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<std::size_t> next(std::size_t batch) {
    const std::size_t b = std::min(batch, order_.size());
    std::vector<std::size_t> out;
    out.reserve(b);
    for (std::size_t k = 0; k < b; ++k) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

std::vector<std::size_t> take_labels(const DomainShard& s, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(s.labels->at(i));
  return out;
}

nn::Model initial_model(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes) {
  nn::ModelConfig mc = cfg.model;
  mc.input_dim = input_dim;
  mc.num_classes = classes;
  mc.init_seed = derive_seed(cfg.seed, {kInit, cfg.model.init_seed});
  return nn::init_model(mc);
}

std::vector<std::size_t> execution_order(const RunHooks& hooks, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (hooks.client_order.empty()) return order;
  auto sorted = hooks.client_order;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != order) throw ContractError("client_order must be a permutation of client ids");
  return hooks.client_order;
}

// Runs fn(i) for each i in `order`, possibly concurrently; results land at index i.
template <typename R, typename F>
std::vector<R> for_each_client(const std::vector<std::size_t>& order, bool parallel, F fn) {
  std::vector<R> out(order.size());
  if (!parallel) {
    for (auto i : order) out[i] = fn(i);
    return out;
  }
  std::vector<std::pair<std::size_t, std::future<R>>> jobs;
  for (auto i : order) jobs.emplace_back(i, std::async(std::launch::async, [&fn, i] { return fn(i); }));
  for (auto& [i, job] : jobs) out[i] = job.get();
  return out;
}

// Labeled mini-batch training of g plus heads on the summed cross-entropy.
void train_supervised(ModelParams& g, std::vector<ModelParams*> heads, const DomainShard& src, std::size_t epochs,
                      std::size_t batch, double lr, double momentum, std::uint64_t seed) {
  if (src.size() == 0 || !src.labels) throw ContractError("supervised training needs a labeled, non-empty shard");
  const std::size_t classes = heads.front()->output_dim();
  const std::size_t steps_per_epoch = (src.size() + batch - 1) / batch;
  BatchSampler sampler(src.size(), seed);
  Velocity vg;
  std::vector<Velocity> vh(heads.size());
  for (std::size_t step = 0; step < epochs * steps_per_epoch; ++step) {
    const auto idx = sampler.next(batch);
    const auto y = take_labels(src, idx);
    Tape tape;
    auto tg = nn::trace(tape, g, true);
    std::vector<nn::TracedModel> th;
    th.reserve(heads.size());
    for (auto* h : heads) th.push_back(nn::trace(tape, *h, true));
    Var z = nn::forward(tg, tape.constant(take_rows(src.inputs, idx)));
    Var labels = tape.constant(losses::one_hot(y, classes));
    Var obj = losses::cross_entropy(nn::classify(th[0], z), labels);
    for (std::size_t k = 1; k < th.size(); ++k) obj = add(obj, losses::cross_entropy(nn::classify(th[k], z), labels));
    auto vars = tg.vars();
    for (const auto& t : th) {
      auto v = t.vars();
      vars.insert(vars.end(), v.begin(), v.end());
    }
    const auto grads = grad(obj, vars);
    const std::size_t ng = tg.vars().size();
    momentum_step(g, std::span(grads).subspan(0, ng), vg, lr, momentum);
    std::size_t off = ng;
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const std::size_t nh = th[k].vars().size();
      momentum_step(*heads[k], std::span(grads).subspan(off, nh), vh[k], lr, momentum);
      off += nh;
    }
  }
}

Tensor ones(std::size_t n) { return Tensor(Shape{n}, 1.0); }

void emit(const RunHooks& hooks, WireEvent::Direction dir, std::size_t round, std::size_t client,
          const std::string& payload, std::uint64_t count) {
  if (hooks.on_wire) hooks.on_wire(WireEvent{dir, round, client, payload, count});
}

}  // namespace

// ---------------------------------------------------------------------------
// Names and config

std::string to_string(Method m) {
  switch (m) {
    case Method::source_only:
      return "source_only";
    case Method::dualadapt:
      return "dualadapt";
    case Method::fed_mcd:
      return "fed_mcd";
    case Method::fed_oracle:
      return "fed_oracle";
    case Method::cent_mcd_one2one:
      return "cent_mcd_one2one";
    case Method::cent_mcd_one2combined:
      return "cent_mcd_one2combined";
    case Method::cent_mcd_one2multiple:
      return "cent_mcd_one2multiple";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::source_only, Method::dualadapt, Method::fed_mcd, Method::fed_oracle,
                   Method::cent_mcd_one2one, Method::cent_mcd_one2combined, Method::cent_mcd_one2multiple}) {
    if (to_string(m) == s) return m;
  }
  throw ContractError("unknown method '" + s + "'");
}

void TrainConfig::validate() const {
  if (client_batch < 1 || pretrain_batch < 1) throw ContractError("batch sizes must be >= 1");
  if (server_batch < 2) throw ContractError("server_batch must be >= 2 to form mixup pairs");
  if (!(client_lr > 0.0 && server_lr > 0.0 && pretrain_lr > 0.0)) throw ContractError("learning rates must be > 0");
  if (!(server_momentum >= 0.0 && server_momentum < 1.0)) throw ContractError("momentum must be in [0, 1)");
  loss.validate();
}

json to_json(const TrainConfig& c) {
  return json{{"rounds", c.rounds},
              {"client_iters", c.client_iters},
              {"server_iters", c.server_iters},
              {"client_batch", c.client_batch},
              {"server_batch", c.server_batch},
              {"client_lr", c.client_lr},
              {"server_lr", c.server_lr},
              {"server_momentum", c.server_momentum},
              {"pretrain_epochs", c.pretrain_epochs},
              {"pretrain_batch", c.pretrain_batch},
              {"pretrain_lr", c.pretrain_lr},
              {"lambda_st", c.loss.lambda_st},
              {"gmm_max_iters", c.gmm.max_iters},
              {"gmm_tol", c.gmm.tol},
              {"pca_min_energy", c.gmm.min_energy},
              {"model", nn::to_json(c.model)},
              {"persist_local_classifier", c.persist_local_classifier},
              {"self_training", c.self_training},
              {"gmm_weighting", c.gmm_weighting},
              {"proxy_updates_global_classifier", c.proxy_updates_global_classifier},
              {"parallel_clients", c.parallel_clients},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.rounds = j.value("rounds", c.rounds);
    c.client_iters = j.value("client_iters", c.client_iters);
    c.server_iters = j.value("server_iters", c.server_iters);
    c.client_batch = j.value("client_batch", c.client_batch);
    c.server_batch = j.value("server_batch", c.server_batch);
    c.client_lr = j.value("client_lr", c.client_lr);
    c.server_lr = j.value("server_lr", c.server_lr);
    c.server_momentum = j.value("server_momentum", c.server_momentum);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.pretrain_batch = j.value("pretrain_batch", c.pretrain_batch);
    c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
    c.loss.lambda_st = j.value("lambda_st", c.loss.lambda_st);
    c.gmm.max_iters = j.value("gmm_max_iters", c.gmm.max_iters);
    c.gmm.tol = j.value("gmm_tol", c.gmm.tol);
    c.gmm.min_energy = j.value("pca_min_energy", c.gmm.min_energy);
    if (j.contains("model")) {
      nn::ModelConfig m = c.model;
      const auto& mj = j.at("model");
      m.feature_dim = mj.value("feature_dim", m.feature_dim);
      m.g_hidden = mj.value("g_hidden", m.g_hidden);
      m.f_hidden = mj.value("f_hidden", m.f_hidden);
      m.activation = nn::activation_from_string(mj.value("activation", nn::to_string(m.activation)));
      m.init_seed = mj.value("init_seed", m.init_seed);
      c.model = m;
    }
    c.persist_local_classifier = j.value("persist_local_classifier", c.persist_local_classifier);
    c.self_training = j.value("self_training", c.self_training);
    c.gmm_weighting = j.value("gmm_weighting", c.gmm_weighting);
    c.proxy_updates_global_classifier = j.value("proxy_updates_global_classifier", c.proxy_updates_global_classifier);
    c.parallel_clients = j.value("parallel_clients", c.parallel_clients);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Optimizers

void sgd_step(ModelParams& params, std::span<const Tensor> grads, double lr) {
  auto ps = nn::parameter_tensors(params);
  if (ps.size() != grads.size()) throw ContractError("sgd_step: gradient count mismatch");
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto p = ps[k]->values();
    auto g = grads[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
}

void momentum_step(ModelParams& params, std::span<const Tensor> grads, Velocity& velocity, double lr,
                   double momentum) {
  auto ps = nn::parameter_tensors(params);
  if (ps.size() != grads.size()) throw ContractError("momentum_step: gradient count mismatch");
  if (velocity.v.empty()) {
    for (auto* p : ps) velocity.v.push_back(Tensor::zeros_like(*p));
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto p = ps[k]->values();
    auto v = velocity.v[k].values();
    auto g = grads[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Messages

std::uint64_t BroadcastMsg::param_count() const {
  return g.param_count() + f_g.param_count() + (w_s ? w_s->param_count() : 0);
}

std::uint64_t UploadMsg::param_count() const { return f_l.param_count() + (w_t ? w_t->param_count() : 0); }

json to_wire(const BroadcastMsg& msg, std::size_t round) {
  json params{{"G", nn::to_json(msg.g)}, {"F_g", nn::to_json(msg.f_g)}};
  if (msg.w_s) params["W_S"] = density::to_json(*msg.w_s);
  return json{{"kind", "broadcast"}, {"round", round}, {"params", params}};
}

json to_wire(const UploadMsg& msg, std::size_t round) {
  json params{{"F_l", nn::to_json(msg.f_l)}};
  if (msg.w_t) params["W_T"] = density::to_json(*msg.w_t);
  return json{{"kind", "upload"}, {"round", round}, {"client", msg.client_id}, {"params", params}};
}

BroadcastMsg broadcast_from_wire(const json& j) {
  try {
    if (j.at("kind") != "broadcast") throw ParseError("not a broadcast payload");
    const auto& p = j.at("params");
    BroadcastMsg m{nn::model_from_json(p.at("G")), nn::model_from_json(p.at("F_g")), std::nullopt};
    if (p.contains("W_S")) m.w_s = density::gmm_from_json(p.at("W_S"));
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("broadcast payload: ") + e.what());
  }
}

UploadMsg upload_from_wire(const json& j) {
  try {
    if (j.at("kind") != "upload") throw ParseError("not an upload payload");
    const auto& p = j.at("params");
    UploadMsg m{j.at("client").get<std::size_t>(), nn::model_from_json(p.at("F_l")), std::nullopt};
    if (p.contains("W_T")) m.w_t = density::gmm_from_json(p.at("W_T"));
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("upload payload: ") + e.what());
  }
}

namespace {

std::uint64_t count_numbers(const json& j) {
  if (j.is_number()) return 1;
  std::uint64_t n = 0;
  if (j.is_array() || j.is_object())
    for (const auto& v : j) n += count_numbers(v);
  return n;
}

}  // namespace

std::uint64_t wire_param_count(const json& payload) { return count_numbers(payload.at("params")); }

// ---------------------------------------------------------------------------
// Server and client steps

ServerState make_server(const DomainShard& source, std::size_t num_classes, const TrainConfig& cfg) {
  if (source.size() == 0 || !source.labels) throw ContractError("server needs a labeled, non-empty source shard");
  auto model = initial_model(cfg, source.dims(), num_classes);
  ServerState s;
  s.g = std::move(model.feature_extractor);
  s.f_g = std::move(model.classifier);
  s.source = source;
  s.num_classes = num_classes;
  return s;
}

void pretrain(ServerState& server, std::size_t epochs, const TrainConfig& cfg) {
  train_supervised(server.g, {&server.f_g}, server.source, epochs, cfg.pretrain_batch, cfg.pretrain_lr,
                   cfg.server_momentum, derive_seed(cfg.seed, {kPretrain}));
}

Var client_step_objective(const nn::TracedModel& g, const nn::TracedModel& f_g, const nn::TracedModel& f_l, Var x,
                          const density::GmmParams* w_s, const losses::LossConfig& loss, FlopCounter* counter,
                          Tensor* features_out) {
  Var z = stop_gradient(nn::forward(g, x, counter));
  if (features_out) *features_out = z.value();
  Var p_g = nn::classify(nn::detach(f_g), z, counter);
  Var p_l = nn::classify(f_l, z, counter);
  const Tensor weights = w_s ? density::confidence_weights(*w_s, z.value()) : ones(z.value().rows());
  return losses::client_objective(p_g, p_l, weights, loss);
}

Var server_step_objective(const nn::TracedModel& g, const nn::TracedModel& f_g,
                          std::span<const ProxyClientView> clients, bool update_global_classifier,
                          FlopCounter* counter) {
  if (clients.empty()) throw ContractError("server objective needs at least one client");
  const nn::TracedModel fg = update_global_classifier ? f_g : nn::detach(f_g);
  std::map<std::size_t, std::pair<Var, Var>> shared;  // inputs node -> (features, p_g)
  std::vector<losses::ServerTerm> terms;
  for (const auto& c : clients) {
    auto it = shared.find(c.inputs.id);
    if (it == shared.end()) {
      Var z = nn::forward(g, c.inputs, counter);
      it = shared.emplace(c.inputs.id, std::pair{z, nn::classify(fg, z, counter)}).first;
    }
    Var p_l = nn::classify(nn::detach(*c.f_l), it->second.first, counter);
    terms.push_back(losses::ServerTerm{c.weights, it->second.second, p_l});
  }
  return losses::server_objective(terms);
}

ClientRoundResult client_round(ClientState& client, const BroadcastMsg& msg, std::size_t client_iters,
                               const TrainConfig& cfg, std::size_t round) {
  const DomainShard& shard = client.target;
  const std::size_t n = shard.size();
  const std::size_t classes = msg.f_g.output_dim();
  if (n == 0) throw InsufficientDataError("client " + std::to_string(client.id) + " has no data");
  if (cfg.gmm_weighting && n < 2 * classes) {
    throw InsufficientDataError("client " + std::to_string(client.id) + " has " + std::to_string(n) +
                                " rows, fewer than the " + std::to_string(2 * classes) + " mixture components");
  }
  if (!client.f_l || !cfg.persist_local_classifier) client.f_l = nn::clone_classifier(msg.f_g);

  losses::LossConfig loss = cfg.loss;
  if (!cfg.self_training) loss.lambda_st = 0.0;
  const density::GmmParams* w_s = cfg.gmm_weighting && msg.w_s ? &*msg.w_s : nullptr;

  ClientRoundResult out;
  FlopCounter counter;
  BatchSampler sampler(n, derive_seed(cfg.seed, {kClient, round, client.id}));
  // Features seen during training, reused for the W_T fit.
  const std::size_t fdim = msg.g.output_dim();
  Tensor features(Shape{n, fdim});
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> seen_order;
  double objective_sum = 0.0;

  for (std::size_t r = 0; r < client_iters; ++r) {
    const auto idx = sampler.next(cfg.client_batch);
    Tape tape;
    tape.set_flop_counter(&counter);
    auto tg = nn::trace(tape, msg.g, false);
    auto tfg = nn::trace(tape, msg.f_g, false);
    auto tfl = nn::trace(tape, *client.f_l, true);
    Tensor z;
    Var obj = client_step_objective(tg, tfg, tfl, tape.constant(take_rows(shard.inputs, idx)), w_s, loss, &counter,
                                    &z);
    const auto grads = grad(obj, tfl.vars());
    sgd_step(*client.f_l, grads, cfg.client_lr);
    objective_sum += obj.value().item();
    out.examples += idx.size();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (seen[idx[k]]) continue;
      seen[idx[k]] = true;
      seen_order.push_back(idx[k]);
      std::copy(z.row(k).begin(), z.row(k).end(), features.values().subspan(idx[k] * fdim).begin());
    }
  }

  if (cfg.gmm_weighting) {
    const std::size_t needed = 2 * classes;
    if (seen_order.size() < needed) {
      // Too few rows visited to fit K components; featurize the rest. Like the
      // GMM fit itself, this is not charged as training FLOPs.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (!seen[i]) rest.push_back(i);
      const Tensor extra = nn::forward_features(msg.g, take_rows(shard.inputs, rest));
      for (std::size_t k = 0; k < rest.size(); ++k) {
        std::copy(extra.row(k).begin(), extra.row(k).end(), features.values().subspan(rest[k] * fdim).begin());
        seen_order.push_back(rest[k]);
      }
    }
    client.w_t = density::fit_gmm(take_rows(features, seen_order), classes,
                                  derive_seed(cfg.seed, {kGmmTarget, round, client.id}), cfg.gmm);
  } else {
    client.w_t.reset();
  }

  out.mean_objective = client_iters ? objective_sum / static_cast<double>(client_iters) : 0.0;
  out.flops = counter.flops;
  out.upload = UploadMsg{client.id, *client.f_l, client.w_t};
  return out;
}

namespace {

std::vector<const UploadMsg*> sorted_uploads(std::span<const UploadMsg> uploads) {
  if (uploads.empty()) throw ContractError("server round needs at least one upload");
  std::vector<const UploadMsg*> out;
  for (const auto& u : uploads) out.push_back(&u);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->client_id < b->client_id; });
  for (std::size_t k = 1; k < out.size(); ++k)
    if (out[k]->client_id == out[k - 1]->client_id) throw ContractError("duplicate upload from one client");
  return out;
}

// Alignment inputs for one server iteration.
struct AlignBatches {
  std::vector<Tensor> inputs;         // distinct batches
  std::vector<std::size_t> batch_of;  // per upload, index into inputs
  std::vector<Tensor> weights;        // per upload
};

using AlignFn = std::function<AlignBatches(std::size_t iteration, const Tensor& source_x)>;

void finetune_step(ServerState& s, const Tensor& x, const Tensor& y, const TrainConfig& cfg, FlopCounter& counter) {
  Tape tape;
  tape.set_flop_counter(&counter);
  auto tg = nn::trace(tape, s.g, true);
  auto tf = nn::trace(tape, s.f_g, true);
  Var p = nn::classify(tf, nn::forward(tg, tape.constant(x), &counter), &counter);
  Var ce = losses::cross_entropy(p, tape.constant(y));
  auto vars = tg.vars();
  const std::size_t ng = vars.size();
  for (Var v : tf.vars()) vars.push_back(v);
  const auto grads = grad(ce, vars);
  momentum_step(s.g, std::span(grads).subspan(0, ng), s.finetune_velocity_g, cfg.server_lr, cfg.server_momentum);
  momentum_step(s.f_g, std::span(grads).subspan(ng), s.finetune_velocity_f, cfg.server_lr, cfg.server_momentum);
}

ServerRoundResult server_iterations(ServerState& s, const std::vector<const UploadMsg*>& uploads,
                                    std::size_t server_iters, const TrainConfig& cfg, std::size_t round,
                                    const AlignFn& align) {
  const bool update_fg = cfg.proxy_updates_global_classifier;
  BatchSampler sampler(s.source.size(), derive_seed(cfg.seed, {kServer, round}));
  FlopCounter counter;
  double objective_sum = 0.0;
  for (std::size_t it = 0; it < server_iters; ++it) {
    const auto idx = sampler.next(cfg.server_batch);
    if (idx.size() < 2) throw InsufficientDataError("server needs at least two source rows per batch");
    const Tensor xs = take_rows(s.source.inputs, idx);
    const Tensor ys = losses::one_hot(take_labels(s.source, idx), s.num_classes);
    const AlignBatches batches = align(it, xs);
    {
      Tape tape;
      tape.set_flop_counter(&counter);
      auto tg = nn::trace(tape, s.g, true);
      auto tf = nn::trace(tape, s.f_g, update_fg);
      std::vector<nn::TracedModel> locals;
      locals.reserve(uploads.size());
      for (auto* u : uploads) locals.push_back(nn::trace(tape, u->f_l, false));
      std::vector<Var> inputs;
      for (const auto& b : batches.inputs) inputs.push_back(tape.constant(b));
      std::vector<ProxyClientView> views;
      for (std::size_t k = 0; k < uploads.size(); ++k)
        views.push_back(ProxyClientView{&locals[k], batches.weights[k], inputs[batches.batch_of[k]]});
      Var obj = server_step_objective(tg, tf, views, update_fg, &counter);
      auto vars = tg.vars();
      const std::size_t ng = vars.size();
      if (update_fg)
        for (Var v : tf.vars()) vars.push_back(v);
      const auto grads = grad(obj, vars);
      momentum_step(s.g, std::span(grads).subspan(0, ng), s.adapt_velocity_g, cfg.server_lr, cfg.server_momentum);
      if (update_fg)
        momentum_step(s.f_g, std::span(grads).subspan(ng), s.adapt_velocity_f, cfg.server_lr, cfg.server_momentum);
      objective_sum += obj.value().item();
    }
    finetune_step(s, xs, ys, cfg, counter);
  }
  return ServerRoundResult{counter.flops,
                           server_iters ? objective_sum / static_cast<double>(server_iters) : 0.0};
}

}  // namespace

ServerRoundResult server_round(ServerState& server, std::span<const UploadMsg> uploads, std::size_t server_iters,
                               const TrainConfig& cfg, std::size_t round) {
  const auto sorted = sorted_uploads(uploads);
  return server_iterations(server, sorted, server_iters, cfg, round, [&](std::size_t it, const Tensor& xs) {
    const auto proxy = proxy::build_proxy_batch(xs, derive_seed(cfg.seed, {kProxy, round, it}));
    AlignBatches b;
    b.inputs.push_back(proxy.inputs);
    for (auto* u : sorted) {
      b.batch_of.push_back(0);
      b.weights.push_back(cfg.gmm_weighting && u->w_t ? proxy::weight_proxy(*u->w_t, server.g, proxy)
                                                      : ones(proxy.inputs.rows()));
    }
    return b;
  });
}

ServerRoundResult oracle_server_round(ServerState& server, std::span<const UploadMsg> uploads,
                                      std::span<const DomainShard> target_trains, std::size_t server_iters,
                                      const TrainConfig& cfg, std::size_t round) {
  const auto sorted = sorted_uploads(uploads);
  std::vector<BatchSampler> samplers;
  for (auto* u : sorted) {
    if (u->client_id >= target_trains.size() || target_trains[u->client_id].size() == 0)
      throw ContractError("no target data for client " + std::to_string(u->client_id));
    samplers.emplace_back(target_trains[u->client_id].size(), derive_seed(cfg.seed, {kOracle, round, u->client_id}));
  }
  return server_iterations(server, sorted, server_iters, cfg, round, [&](std::size_t, const Tensor&) {
    AlignBatches b;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      const auto& shard = target_trains[sorted[k]->client_id];
      b.inputs.push_back(take_rows(shard.inputs, samplers[k].next(cfg.server_batch)));
      b.batch_of.push_back(k);
      b.weights.push_back(ones(b.inputs.back().rows()));
    }
    return b;
  });
}

// ---------------------------------------------------------------------------
// Evaluation

Prediction predict(const TargetModel& model, const Tensor& x) {
  if (model.heads.empty()) throw ContractError("model has no classifier heads");
  const Tensor z = nn::forward_features(model.g, x);
  Tensor probs = nn::forward_classifier(model.heads[0], z);
  for (std::size_t k = 1; k < model.heads.size(); ++k) probs = add(probs, nn::forward_classifier(model.heads[k], z));
  if (model.heads.size() > 1) probs = scale(probs, 1.0 / static_cast<double>(model.heads.size()));
  Prediction p;
  p.labels = argmax_rows(probs);
  p.probs = std::move(probs);
  return p;
}

Prediction predict(const EnsembleModel& model, const Tensor& x, std::size_t client) {
  if (client >= model.local.size()) throw ContractError("unknown client " + std::to_string(client));
  return predict(TargetModel{model.g, {model.f_g, model.local[client]}}, x);
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction and label counts differ");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

double fraction_correct(const TargetModel& m, const DomainShard& shard) {
  if (!shard.labels) throw ContractError("evaluation shard " + shard.domain + " has no labels");
  return accuracy(predict(m, shard.inputs).labels, *shard.labels);
}

}  // namespace

Evaluation evaluate(const TargetModel& source_model, std::span<const TargetModel> models, const Benchmark& bench) {
  if (models.size() != bench.targets.size()) throw ContractError("need one model per target domain");
  Evaluation e;
  e.source_accuracy = fraction_correct(source_model, bench.source_test);
  for (std::size_t i = 0; i < models.size(); ++i) e.per_target_accuracy.push_back(fraction_correct(models[i], bench.targets[i].test));
  if (!models.empty()) {
    e.mean_accuracy = std::accumulate(e.per_target_accuracy.begin(), e.per_target_accuracy.end(), 0.0) /
                      static_cast<double>(models.size());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json eval_json(const Evaluation& e) {
  return json{{"source_accuracy", e.source_accuracy},
              {"per_target_accuracy", e.per_target_accuracy},
              {"mean_accuracy", e.mean_accuracy}};
}

Evaluation eval_from_json(const json& j) {
  return Evaluation{j.at("source_accuracy").get<double>(), j.at("per_target_accuracy").get<std::vector<double>>(),
                    j.at("mean_accuracy").get<double>()};
}

json cost_json(const costs::ModuleCost& c) { return json{{"params", c.params}, {"flops", c.flops}}; }

}  // namespace

json TrainReport::to_json() const {
  json rs = json::array();
  for (const auto& r : rounds) {
    rs.push_back(json{{"round", r.round},
                      {"source_accuracy", r.eval.source_accuracy},
                      {"per_target_accuracy", r.eval.per_target_accuracy},
                      {"mean_accuracy", r.eval.mean_accuracy},
                      {"client_flops", r.client_flops},
                      {"server_flops", r.server_flops},
                      {"upload_params", r.upload_params},
                      {"broadcast_params", r.broadcast_params},
                      {"client_objective", r.client_objective},
                      {"server_objective", r.server_objective}});
  }
  return json{{"method", method},
              {"seed", seed},
              {"privacy_violating", privacy_violating},
              {"config", config},
              {"costs", {{"feature_extractor", cost_json(feature_extractor_cost)}, {"classifier", cost_json(classifier_cost)}}},
              {"pretrain", eval_json(pretrain)},
              {"rounds", rs},
              {"final", eval_json(final_eval)},
              {"ledger", costs::to_json(ledger)}};
}

std::string TrainReport::dump() const { return to_json().dump(2); }

TrainReport report_from_json(const json& j) {
  try {
    TrainReport r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.privacy_violating = j.at("privacy_violating").get<bool>();
    r.config = j.at("config");
    const auto& c = j.at("costs");
    r.feature_extractor_cost = {c.at("feature_extractor").at("params"), c.at("feature_extractor").at("flops")};
    r.classifier_cost = {c.at("classifier").at("params"), c.at("classifier").at("flops")};
    r.pretrain = eval_from_json(j.at("pretrain"));
    for (const auto& rj : j.at("rounds")) {
      RoundRecord rec;
      rec.round = rj.at("round");
      rec.eval = eval_from_json(rj);
      rec.client_flops = rj.at("client_flops").get<std::vector<std::uint64_t>>();
      rec.server_flops = rj.at("server_flops");
      rec.upload_params = rj.at("upload_params");
      rec.broadcast_params = rj.at("broadcast_params");
      rec.client_objective = rj.at("client_objective").get<std::vector<double>>();
      rec.server_objective = rj.at("server_objective");
      r.rounds.push_back(std::move(rec));
    }
    r.final_eval = eval_from_json(j.at("final"));
    r.ledger = costs::ledger_from_json(j.at("ledger"));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Runs

namespace {

TrainReport start_report(const std::string& method, const TrainConfig& cfg, const ModelParams& g,
                         const ModelParams& f) {
  TrainReport r;
  r.method = method;
  r.seed = cfg.seed;
  r.config = to_json(cfg);
  r.config.erase("seed");  // reported separately
  r.feature_extractor_cost = costs::module_cost(g);
  r.classifier_cost = costs::module_cost(f);
  return r;
}

std::vector<TargetModel> replicate(const TargetModel& m, std::size_t n) { return std::vector<TargetModel>(n, m); }

void check_benchmark(const Benchmark& bench) {
  if (bench.targets.empty()) throw ContractError("benchmark has no target domains");
  if (bench.source_train.size() == 0 || !bench.source_train.labels) throw ContractError("source shard is empty or unlabeled");
  for (const auto& t : bench.targets)
    if (t.train.labels) throw ContractError("target training shard " + t.train.domain + " carries labels");
}

RunResult run_dual(const TrainConfig& cfg_in, const Benchmark& bench, const RunHooks& hooks, bool oracle) {
  TrainConfig cfg = cfg_in;
  if (oracle) cfg.gmm_weighting = false;
  cfg.validate();
  check_benchmark(bench);
  const std::size_t n_clients = bench.targets.size();
  const auto order = execution_order(hooks, n_clients);

  ServerState server = make_server(bench.source_train, bench.classes, cfg);
  pretrain(server, cfg.pretrain_epochs, cfg);

  RunResult res;
  res.report = start_report(oracle ? "fed_oracle" : "dualadapt", cfg, server.g, server.f_g);
  res.report.privacy_violating = oracle;
  res.source_model = TargetModel{server.g, {server.f_g}};
  res.models = replicate(res.source_model, n_clients);
  res.report.pretrain = evaluate(res.source_model, res.models, bench);
  res.report.final_eval = res.report.pretrain;

  std::vector<ClientState> clients;
  std::vector<DomainShard> target_trains;
  for (std::size_t i = 0; i < n_clients; ++i) {
    clients.push_back(ClientState{i, bench.targets[i].train, std::nullopt, std::nullopt});
    if (oracle) target_trains.push_back(bench.targets[i].train);
  }

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    if (cfg.gmm_weighting) {
      server.w_s = density::fit_gmm(nn::forward_features(server.g, server.source.inputs), server.num_classes,
                                    derive_seed(cfg.seed, {kGmmSource, round}), cfg.gmm);
    } else {
      server.w_s.reset();
    }
    const json bwire = to_wire(BroadcastMsg{server.g, server.f_g, server.w_s}, round);
    const std::string bpayload = bwire.dump();
    const std::uint64_t bcount = wire_param_count(bwire);
    const BroadcastMsg received = broadcast_from_wire(json::parse(bpayload));
    for (auto i : order) emit(hooks, WireEvent::Direction::broadcast, round, i, bpayload, bcount);

    auto results = for_each_client<ClientRoundResult>(order, cfg.parallel_clients, [&](std::size_t i) {
      return client_round(clients[i], received, cfg.client_iters, cfg, round);
    });

    std::vector<UploadMsg> uploads;
    std::vector<std::uint64_t> ucounts(n_clients);
    for (auto i : order) {
      const json uwire = to_wire(results[i].upload, round);
      const std::string upayload = uwire.dump();
      ucounts[i] = wire_param_count(uwire);
      emit(hooks, WireEvent::Direction::upload, round, i, upayload, ucounts[i]);
      uploads.push_back(upload_from_wire(json::parse(upayload)));
    }

    const ServerRoundResult srv = oracle ? oracle_server_round(server, uploads, target_trains, cfg.server_iters, cfg, round)
                                         : server_round(server, uploads, cfg.server_iters, cfg, round);

    RoundRecord rec;
    rec.round = round;
    rec.server_flops = srv.flops;
    rec.server_objective = srv.mean_objective;
    std::vector<ModelParams> locals(n_clients);
    for (const auto& u : uploads) locals[u.client_id] = u.f_l;
    res.source_model = TargetModel{server.g, {server.f_g}};
    res.models.clear();
    for (std::size_t i = 0; i < n_clients; ++i) {
      res.models.push_back(TargetModel{server.g, {server.f_g, locals[i]}});
      rec.client_flops.push_back(results[i].flops);
      rec.client_objective.push_back(results[i].mean_objective);
      rec.upload_params += ucounts[i];
      rec.broadcast_params += bcount;
      res.report.ledger.add({"client" + std::to_string(i), round, results[i].flops, results[i].examples, ucounts[i], bcount});
    }
    res.report.ledger.add({"server", round, srv.flops, 0, 0, 0});
    rec.eval = evaluate(res.source_model, res.models, bench);
    res.report.final_eval = rec.eval;
    res.report.rounds.push_back(std::move(rec));
  }
  return res;
}

RunResult run_source_only(const TrainConfig& cfg, const Benchmark& bench) {
  cfg.validate();
  check_benchmark(bench);
  ServerState server = make_server(bench.source_train, bench.classes, cfg);
  pretrain(server, cfg.pretrain_epochs, cfg);
  RunResult res;
  res.report = start_report("source_only", cfg, server.g, server.f_g);
  res.source_model = TargetModel{server.g, {server.f_g}};
  res.models = replicate(res.source_model, bench.targets.size());
  res.report.pretrain = evaluate(res.source_model, res.models, bench);
  res.report.final_eval = res.report.pretrain;
  return res;
}

// ---- MCD family ----

struct HeadPair {
  ModelParams f1, f2;
};

struct McdModel {
  ModelParams g;
  std::vector<HeadPair> heads;
};

TargetModel target_model(const McdModel& m, std::size_t pair) {
  return TargetModel{m.g, {m.heads[pair].f1, m.heads[pair].f2}};
}

// Both heads trained jointly on the source; F2 starts from its own seed so the
// pair can disagree on target data.
McdModel pretrain_mcd(const TrainConfig& cfg, const Benchmark& bench) {
  auto base = initial_model(cfg, bench.source_train.dims(), bench.classes);
  std::vector<std::size_t> widths{base.feature_extractor.output_dim()};
  widths.insert(widths.end(), cfg.model.f_hidden.begin(), cfg.model.f_hidden.end());
  widths.push_back(bench.classes);
  McdModel m{std::move(base.feature_extractor),
             {HeadPair{std::move(base.classifier), nn::init_dense(widths, cfg.model.activation,
                                                                  derive_seed(cfg.seed, {kMcdInit}))}}};
  train_supervised(m.g, {&m.heads[0].f1, &m.heads[0].f2}, bench.source_train, cfg.pretrain_epochs,
                   cfg.pretrain_batch, cfg.pretrain_lr, cfg.server_momentum, derive_seed(cfg.seed, {kPretrain}));
  return m;
}

// One adversarial step: both heads fit the source, while a gradient-reversal
// layer lets the heads maximize and G minimize their disagreement on target.
// xt[k] is the target batch for head pair k.
double mcd_step(McdModel& m, const Tensor& xs, const Tensor& ys, const std::vector<Tensor>& xt, double lr,
                FlopCounter* counter) {
  Tape tape;
  tape.set_flop_counter(counter);
  auto tg = nn::trace(tape, m.g, true);
  std::vector<nn::TracedModel> th;
  th.reserve(2 * m.heads.size());
  for (const auto& h : m.heads) {
    th.push_back(nn::trace(tape, h.f1, true));
    th.push_back(nn::trace(tape, h.f2, true));
  }
  Var zs = nn::forward(tg, tape.constant(xs), counter);
  Var y = tape.constant(ys);
  std::optional<Var> obj;
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    const auto& t1 = th[2 * k];
    const auto& t2 = th[2 * k + 1];
    Var zt = reverse_gradient(nn::forward(tg, tape.constant(xt[k]), counter));
    Var ce = add(losses::cross_entropy(nn::classify(t1, zs, counter), y),
                 losses::cross_entropy(nn::classify(t2, zs, counter), y));
    Var term = sub(ce, losses::discrepancy(nn::classify(t1, zt, counter), nn::classify(t2, zt, counter)));
    obj = obj ? add(*obj, term) : term;
  }
  auto vars = tg.vars();
  for (const auto& t : th)
    for (Var v : t.vars()) vars.push_back(v);
  const auto grads = grad(*obj, vars);
  std::size_t off = 0;
  auto step = [&](ModelParams& p, std::size_t count) {
    sgd_step(p, std::span(grads).subspan(off, count), lr);
    off += count;
  };
  step(m.g, tg.vars().size());
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    step(m.heads[k].f1, th[2 * k].vars().size());
    step(m.heads[k].f2, th[2 * k + 1].vars().size());
  }
  return obj->value().item();
}

struct LocalStats {
  std::uint64_t flops = 0;
  std::uint64_t examples = 0;
  double mean_objective = 0.0;
};

// R_c adversarial steps. targets[k] feeds head pair k.
LocalStats mcd_local_training(McdModel& m, const DomainShard& source, const std::vector<const Tensor*>& targets,
                              const TrainConfig& cfg, std::uint64_t seed) {
  std::size_t b = std::min(cfg.client_batch, source.size());
  for (auto* t : targets) b = std::min(b, t->rows());
  if (b == 0) throw InsufficientDataError("adversarial training needs non-empty source and target data");
  BatchSampler src(source.size(), derive_seed(seed, {0}));
  std::vector<BatchSampler> tgt;
  for (std::size_t k = 0; k < targets.size(); ++k) tgt.emplace_back(targets[k]->rows(), derive_seed(seed, {1, k}));
  FlopCounter counter;
  LocalStats s;
  double sum = 0.0;
  for (std::size_t r = 0; r < cfg.client_iters; ++r) {
    const auto idx = src.next(b);
    std::vector<Tensor> xt;
    for (std::size_t k = 0; k < targets.size(); ++k) xt.push_back(take_rows(*targets[k], tgt[k].next(b)));
    sum += mcd_step(m, take_rows(source.inputs, idx), losses::one_hot(take_labels(source, idx), m.heads[0].f1.output_dim()),
                    xt, cfg.client_lr, &counter);
    s.examples += b * targets.size();
  }
  s.flops = counter.flops;
  s.mean_objective = cfg.client_iters ? sum / static_cast<double>(cfg.client_iters) : 0.0;
  return s;
}

json mcd_wire(const McdModel& m, const std::string& kind, std::size_t round, std::optional<std::size_t> client) {
  json j{{"kind", kind},
         {"round", round},
         {"params", {{"G", nn::to_json(m.g)}, {"F1", nn::to_json(m.heads[0].f1)}, {"F2", nn::to_json(m.heads[0].f2)}}}};
  if (client) j["client"] = *client;
  return j;
}

McdModel mcd_from_wire(const json& j) {
  try {
    const auto& p = j.at("params");
    return McdModel{nn::model_from_json(p.at("G")),
                    {HeadPair{nn::model_from_json(p.at("F1")), nn::model_from_json(p.at("F2"))}}};
  } catch (const json::exception& e) {
    throw ParseError(std::string("mcd payload: ") + e.what());
  }
}

void add_into(ModelParams& acc, const ModelParams& x) {
  if (acc.layers.size() != x.layers.size()) throw ShapeError("cannot average models of different depth");
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    acc.layers[l].weight = add(acc.layers[l].weight, x.layers[l].weight);
    acc.layers[l].bias = add(acc.layers[l].bias, x.layers[l].bias);
  }
}

void scale_params(ModelParams& m, double s) {
  for (auto& l : m.layers) {
    l.weight = scale(l.weight, s);
    l.bias = scale(l.bias, s);
  }
}

// Uniform FedAvg in client-id order. A single model is returned unchanged.
McdModel fed_average(const std::vector<McdModel>& models) {
  McdModel avg = models.front();
  if (models.size() == 1) return avg;
  for (std::size_t k = 1; k < models.size(); ++k) {
    add_into(avg.g, models[k].g);
    add_into(avg.heads[0].f1, models[k].heads[0].f1);
    add_into(avg.heads[0].f2, models[k].heads[0].f2);
  }
  const double s = 1.0 / static_cast<double>(models.size());
  scale_params(avg.g, s);
  scale_params(avg.heads[0].f1, s);
  scale_params(avg.heads[0].f2, s);
  return avg;
}

RunResult start_mcd_run(const std::string& name, const TrainConfig& cfg, const Benchmark& bench, McdModel& model) {
  cfg.validate();
  check_benchmark(bench);
  model = pretrain_mcd(cfg, bench);
  RunResult res;
  res.report = start_report(name, cfg, model.g, model.heads[0].f1);
  res.source_model = target_model(model, 0);
  res.models = replicate(res.source_model, bench.targets.size());
  res.report.pretrain = evaluate(res.source_model, res.models, bench);
  res.report.final_eval = res.report.pretrain;
  return res;
}

RunResult run_fed_mcd(const TrainConfig& cfg, const Benchmark& bench, const RunHooks& hooks) {
  McdModel global;
  RunResult res = start_mcd_run("fed_mcd", cfg, bench, global);
  const std::size_t n_clients = bench.targets.size();
  const auto order = execution_order(hooks, n_clients);

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const json bwire = mcd_wire(global, "broadcast", round, std::nullopt);
    const std::string bpayload = bwire.dump();
    const std::uint64_t bcount = wire_param_count(bwire);
    const McdModel received = mcd_from_wire(json::parse(bpayload));
    for (auto i : order) emit(hooks, WireEvent::Direction::broadcast, round, i, bpayload, bcount);

    using Local = std::pair<McdModel, LocalStats>;
    auto results = for_each_client<Local>(order, cfg.parallel_clients, [&](std::size_t i) {
      McdModel local = received;
      auto stats = mcd_local_training(local, bench.source_train, {&bench.targets[i].train.inputs}, cfg,
                                      derive_seed(cfg.seed, {kMcd, round, i}));
      return Local{std::move(local), stats};
    });

    std::vector<McdModel> uploaded(n_clients);
    std::vector<std::uint64_t> ucounts(n_clients);
    for (auto i : order) {
      const json uwire = mcd_wire(results[i].first, "upload", round, i);
      const std::string upayload = uwire.dump();
      ucounts[i] = wire_param_count(uwire);
      emit(hooks, WireEvent::Direction::upload, round, i, upayload, ucounts[i]);
      uploaded[i] = mcd_from_wire(json::parse(upayload));
    }
    global = fed_average(uploaded);

    RoundRecord rec;
    rec.round = round;
    for (std::size_t i = 0; i < n_clients; ++i) {
      const auto& st = results[i].second;
      rec.client_flops.push_back(st.flops);
      rec.client_objective.push_back(st.mean_objective);
      rec.upload_params += ucounts[i];
      rec.broadcast_params += bcount;
      res.report.ledger.add({"client" + std::to_string(i), round, st.flops, st.examples, ucounts[i], bcount});
    }
    res.report.ledger.add({"server", round, 0, 0, 0, 0});
    res.source_model = target_model(global, 0);
    res.models = replicate(res.source_model, n_clients);
    rec.eval = evaluate(res.source_model, res.models, bench);
    res.report.final_eval = rec.eval;
    res.report.rounds.push_back(std::move(rec));
  }
  return res;
}

// Centralized MCD with target data pooled in one place.
RunResult run_centralized(Method kind, const TrainConfig& cfg, const Benchmark& bench) {
  McdModel pre;
  RunResult res = start_mcd_run(to_string(kind), cfg, bench, pre);
  const std::size_t n = bench.targets.size();

  std::vector<McdModel> models;  // one2one: per target; otherwise a single model
  Tensor pooled;
  if (kind == Method::cent_mcd_one2one) {
    models.assign(n, pre);
  } else if (kind == Method::cent_mcd_one2combined) {
    models.push_back(pre);
    std::vector<Tensor> parts;
    for (const auto& t : bench.targets) parts.push_back(t.train.inputs);
    pooled = concat_rows(parts);
  } else {
    McdModel m = pre;
    m.heads.assign(n, pre.heads[0]);
    models.push_back(std::move(m));
  }

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    std::uint64_t flops = 0, examples = 0;
    double objective = 0.0;
    auto absorb = [&](const LocalStats& s) {
      flops += s.flops;
      examples += s.examples;
      objective += s.mean_objective;
    };
    if (kind == Method::cent_mcd_one2one) {
      for (std::size_t i = 0; i < n; ++i)
        absorb(mcd_local_training(models[i], bench.source_train, {&bench.targets[i].train.inputs}, cfg,
                                  derive_seed(cfg.seed, {kMcd, round, i})));
      res.models.clear();
      for (const auto& m : models) res.models.push_back(target_model(m, 0));
    } else if (kind == Method::cent_mcd_one2combined) {
      absorb(mcd_local_training(models[0], bench.source_train, {&pooled}, cfg, derive_seed(cfg.seed, {kMcd, round, 0})));
      res.models = replicate(target_model(models[0], 0), n);
    } else {
      std::vector<const Tensor*> targets;
      for (const auto& t : bench.targets) targets.push_back(&t.train.inputs);
      absorb(mcd_local_training(models[0], bench.source_train, targets, cfg, derive_seed(cfg.seed, {kMcd, round, 0})));
      res.models.clear();
      for (std::size_t i = 0; i < n; ++i) res.models.push_back(target_model(models[0], i));
    }
    rec.client_flops.push_back(flops);
    rec.client_objective.push_back(objective);
    res.report.ledger.add({"central", round, flops, examples, 0, 0});
    // Source accuracy uses the first head pair; in one2one that is target 0's model.
    res.source_model = res.models.front();
    rec.eval = evaluate(res.source_model, res.models, bench);
    res.report.final_eval = rec.eval;
    res.report.rounds.push_back(std::move(rec));
  }
  return res;
}

}  // namespace

RunResult run_dualadapt(const TrainConfig& cfg, const Benchmark& bench, const RunHooks& hooks) {
  return run_dual(cfg, bench, hooks, false);
}

RunResult run_baseline(Method kind, const TrainConfig& cfg, const Benchmark& bench, const RunHooks& hooks) {
  switch (kind) {
    case Method::source_only:
      return run_source_only(cfg, bench);
    case Method::fed_mcd:
      return run_fed_mcd(cfg, bench, hooks);
    case Method::fed_oracle:
      return run_dual(cfg, bench, hooks, true);
    case Method::cent_mcd_one2one:
    case Method::cent_mcd_one2combined:
    case Method::cent_mcd_one2multiple:
      return run_centralized(kind, cfg, bench);
    case Method::dualadapt:
      break;
  }
  throw ContractError("dualadapt is not a baseline; use run_dualadapt");
}

RunResult run_method(Method method, const TrainConfig& cfg, const Benchmark& bench, const RunHooks& hooks) {
  return method == Method::dualadapt ? run_dualadapt(cfg, bench, hooks) : run_baseline(method, cfg, bench, hooks);
}

}  // namespace dualadapt::federation
