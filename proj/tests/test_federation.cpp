#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dualadapt/error.hpp"
#include "dualadapt/federation.hpp"
#include "dualadapt/random.hpp"
#include "support.hpp"

using namespace dualadapt;
using namespace dualadapt::federation;

namespace {

data::Benchmark tiny_bench(std::size_t targets = 2, std::uint64_t seed = 1) {
  data::BenchmarkSpec s;
  s.classes = 3;
  s.dims = 4;
  s.per_domain = 200;
  s.target_fraction = 0.2;
  s.center_scale = 2.0;
  s.seed = seed;
  const std::vector<data::ShiftSpec> pool{{0.4, {}, 1.0, 0.2}, {-0.3, {0.5, -0.5, 0.5, -0.5}, 1.1, 0.1},
                                          {0.8, {}, 0.9, 0.3}};
  s.shifts.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(targets));
  return data::gen_benchmark(s);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.rounds = 2;
  c.client_iters = 3;
  c.server_iters = 2;
  c.client_batch = 8;
  c.server_batch = 8;
  c.pretrain_epochs = 3;
  c.pretrain_batch = 16;
  c.model.g_hidden = {8};
  c.model.feature_dim = 6;
  c.seed = 11;
  return c;
}

double mean_discrepancy(const nn::ModelParams& g, const nn::ModelParams& a, const nn::ModelParams& b, const Tensor& x) {
  const Tensor z = nn::forward_features(g, x);
  const Tensor pa = nn::forward_classifier(a, z), pb = nn::forward_classifier(b, z);
  double s = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) s += std::abs(pa.values()[i] - pb.values()[i]);
  return s / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("sgd and momentum steps by hand") {
  nn::ModelParams m;
  m.layers.push_back({Tensor::matrix({{1, 2}}), Tensor::vector({0.5, -0.5})});
  const std::vector<Tensor> g{Tensor::matrix({{1, -1}}), Tensor::vector({2, 0})};
  auto a = m;
  sgd_step(a, g, 0.1);
  CHECK(a.layers[0].weight == Tensor::matrix({{0.9, 2.1}}));
  CHECK(a.layers[0].bias == Tensor::vector({0.3, -0.5}));

  auto b = m;
  Velocity v;
  momentum_step(b, g, v, 0.1, 0.5);
  CHECK(b == a);
  momentum_step(b, g, v, 0.1, 0.5);
  // v = 0.5 * g + g = 1.5 g
  CHECK(b.layers[0].weight.values()[0] == doctest::Approx(0.9 - 0.15));
  CHECK(b.layers[0].bias.values()[0] == doctest::Approx(0.3 - 0.3));
  CHECK_THROWS_AS(sgd_step(a, std::span(g).subspan(0, 1), 0.1), ContractError);
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.server_momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.client_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = tiny_config();
  c.persist_local_classifier = false;
  const auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::source_only, Method::dualadapt, Method::fed_mcd, Method::fed_oracle, Method::cent_mcd_one2one,
                   Method::cent_mcd_one2combined, Method::cent_mcd_one2multiple})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS(method_from_string("fed_nothing"));
}

TEST_CASE("pretraining fits a linearly separable source") {
  Rng rng(2);
  data::DomainShard src{data::kSourceDomain, data::Split::train, Tensor(Shape{400, 2}), std::vector<std::size_t>(400)};
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < 400; ++i) {
    const double a = n(rng), b = n(rng);
    src.inputs.at(i, 0) = a;
    src.inputs.at(i, 1) = b;
    (*src.labels)[i] = a + 0.5 * b > 0 ? 1 : 0;
  }
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(src, 2, cfg);
  pretrain(s, 30, cfg);
  const auto pred = predict(TargetModel{s.g, {s.f_g}}, src.inputs);
  CHECK(accuracy(pred.labels, *src.labels) >= 0.95);
}

TEST_CASE("accuracy is a fraction") {
  const std::vector<std::size_t> p{0, 1, 2, 2}, t{0, 1, 1, 2};
  CHECK(accuracy(p, t) == 0.75);
  CHECK_THROWS(accuracy(p, std::vector<std::size_t>{0}));
}

TEST_CASE("client round with no iterations returns the global classifier") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  pretrain(s, 2, cfg);
  ClientState c{0, bench.targets[0].train, std::nullopt, std::nullopt};
  const auto r = client_round(c, BroadcastMsg{s.g, s.f_g, std::nullopt}, 0, cfg, 1);
  CHECK(r.upload.f_l == s.f_g);
  CHECK(r.flops == 0);
  CHECK(mean_discrepancy(s.g, s.f_g, r.upload.f_l, bench.targets[0].train.inputs) == 0.0);
}

TEST_CASE("without self-training the local classifier drifts away from the global one") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  cfg.loss.lambda_st = 0.0;
  cfg.gmm_weighting = false;
  cfg.client_lr = 0.1;
  ServerState s = make_server(bench.source_train, 3, cfg);
  pretrain(s, 3, cfg);
  ClientState c{0, bench.targets[0].train, nn::clone_classifier(s.f_g), std::nullopt};
  c.f_l->layers[0].weight.values()[0] += 0.05;  // nudge off the zero-gradient point
  const Tensor& x = bench.targets[0].train.inputs;
  const double before = mean_discrepancy(s.g, s.f_g, *c.f_l, x);
  cfg.persist_local_classifier = true;
  client_round(c, BroadcastMsg{s.g, s.f_g, std::nullopt}, 20, cfg, 1);
  CHECK(mean_discrepancy(s.g, s.f_g, *c.f_l, x) > before);
}

TEST_CASE("client flops follow the per-example formula") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  pretrain(s, 2, cfg);
  s.w_s = density::fit_gmm(nn::forward_features(s.g, s.source.inputs), 3, 1);
  ClientState c{0, bench.targets[0].train, std::nullopt, std::nullopt};
  const auto r = client_round(c, BroadcastMsg{s.g, s.f_g, s.w_s}, 5, cfg, 1);
  const auto per = costs::method_client_flops(
      costs::Method::dualadapt, costs::FlopCosts{costs::module_cost(s.g).flops, costs::module_cost(s.f_g).flops, 0});
  CHECK(r.examples == 5 * cfg.client_batch);
  CHECK(r.flops == r.examples * per);
  REQUIRE(r.upload.w_t.has_value());
  CHECK(r.upload.param_count() == s.f_g.param_count() + r.upload.w_t->param_count());
}

TEST_CASE("client with too few rows for the mixture is rejected") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  data::DomainShard small = bench.targets[0].train;
  small.inputs = take_rows(small.inputs, std::vector<std::size_t>{0, 1, 2, 3, 4});
  ClientState c{0, small, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(client_round(c, BroadcastMsg{s.g, s.f_g, std::nullopt}, 1, cfg, 1), InsufficientDataError);
}

TEST_CASE("server iteration with an agreeing local classifier is one SGD step on source CE") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  cfg.server_momentum = 0.0;
  cfg.gmm_weighting = false;
  cfg.server_lr = 0.05;
  // Full-batch, so the sampled order only changes summation order.
  cfg.server_batch = bench.source_train.size();
  ServerState s = make_server(bench.source_train, 3, cfg);
  pretrain(s, 2, cfg);

  ServerState lib = s;
  const auto r = server_round(lib, std::vector<UploadMsg>{UploadMsg{0, s.f_g, std::nullopt}}, 1, cfg, 1);
  CHECK(r.mean_objective == 0.0);

  Tape tape;
  auto tg = nn::trace(tape, s.g, true);
  auto tf = nn::trace(tape, s.f_g, true);
  Var ce = losses::cross_entropy(nn::classify(tf, nn::forward(tg, tape.constant(s.source.inputs))),
                                 tape.constant(losses::one_hot(*s.source.labels, 3)));
  auto vars = tg.vars();
  for (Var v : tf.vars()) vars.push_back(v);
  const auto grads = grad(ce, vars);
  auto g = s.g;
  auto f = s.f_g;
  sgd_step(g, std::span(grads).subspan(0, tg.vars().size()), cfg.server_lr);
  sgd_step(f, std::span(grads).subspan(tg.vars().size()), cfg.server_lr);
  auto same = [](const nn::ModelParams& a, const nn::ModelParams& b) {
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
      for (std::size_t i = 0; i < a.layers[k].weight.size(); ++i)
        CHECK(a.layers[k].weight.values()[i] == doctest::Approx(b.layers[k].weight.values()[i]).epsilon(1e-12));
      for (std::size_t i = 0; i < a.layers[k].bias.size(); ++i)
        CHECK(a.layers[k].bias.values()[i] == doctest::Approx(b.layers[k].bias.values()[i]).epsilon(1e-12));
    }
  };
  same(lib.g, g);
  same(lib.f_g, f);

  Rng rng(4);
  ServerState moved = s;
  const auto r2 = server_round(
      moved, std::vector<UploadMsg>{UploadMsg{0, testing::random_dense({s.f_g.input_dim(), 3}, rng), std::nullopt}}, 1,
      cfg, 1);
  CHECK(r2.mean_objective > 0.0);
  CHECK_FALSE(moved.g == lib.g);
}

TEST_CASE("zero alignment weights leave only fine-tuning") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  pretrain(s, 2, cfg);
  Rng rng(4);
  const auto f_l = testing::random_dense({s.f_g.input_dim(), 3}, rng);
  Tape tape;
  auto tg = nn::trace(tape, s.g, true);
  auto tf = nn::trace(tape, s.f_g, true);
  auto tl = nn::trace(tape, f_l, true);
  Var x = tape.constant(take_rows(s.source.inputs, std::vector<std::size_t>{0, 1, 2, 3}));
  std::vector<ProxyClientView> views{{&tl, Tensor(Shape{4}), x}};
  const auto gr = grad(server_step_objective(tg, tf, views, false), tg.vars());
  for (const auto& t : gr)
    for (double v : t.values()) CHECK(v == 0.0);
}

TEST_CASE("server rejects duplicate uploads") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  const std::vector<UploadMsg> ups{UploadMsg{0, s.f_g, std::nullopt}, UploadMsg{0, s.f_g, std::nullopt}};
  CHECK_THROWS_AS(server_round(s, ups, 1, cfg, 1), ContractError);
}

TEST_CASE("wire payloads round trip and count parameters") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  const auto gmm = density::fit_gmm(nn::forward_features(s.g, s.source.inputs), 3, 1);
  const BroadcastMsg b{s.g, s.f_g, gmm};
  const auto bw = to_wire(b, 3);
  CHECK(bw.at("kind") == "broadcast");
  CHECK(wire_param_count(bw) == b.param_count());
  CHECK(broadcast_from_wire(nlohmann::json::parse(bw.dump())).g == s.g);
  const UploadMsg u{1, s.f_g, gmm};
  const auto uw = to_wire(u, 3);
  CHECK(wire_param_count(uw) == s.f_g.param_count() + gmm.param_count());
  const auto back = upload_from_wire(nlohmann::json::parse(uw.dump()));
  CHECK(back.client_id == 1);
  CHECK(back.f_l == s.f_g);
  CHECK_THROWS(upload_from_wire(bw));
}

TEST_CASE("ensemble predictions") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  ServerState s = make_server(bench.source_train, 3, cfg);
  pretrain(s, 2, cfg);
  const Tensor& x = bench.targets[0].test.inputs;
  const EnsembleModel same{s.g, s.f_g, {s.f_g, s.f_g}};
  const auto base = predict(TargetModel{s.g, {s.f_g}}, x);
  CHECK(predict(same, x, 1).labels == base.labels);
  CHECK(predict(same, x, 1).probs == base.probs);
  CHECK_THROWS(predict(same, x, 2));
}

TEST_CASE("dualadapt runs are deterministic and independent of client order") {
  const auto bench = tiny_bench(3);
  TrainConfig cfg = tiny_config();
  const auto a = run_dualadapt(cfg, bench);
  const auto b = run_dualadapt(cfg, bench);
  CHECK(a.report.dump() == b.report.dump());
  RunHooks h;
  h.client_order = {2, 0, 1};
  const auto c = run_dualadapt(cfg, bench, h);
  CHECK(c.source_model.g == a.source_model.g);
  CHECK(c.source_model.heads == a.source_model.heads);
  cfg.parallel_clients = true;
  auto d = run_dualadapt(cfg, bench).report.to_json();
  auto e = a.report.to_json();
  d.erase("config");
  e.erase("config");
  CHECK(d == e);
  h.client_order = {0, 0, 1};
  CHECK_THROWS_AS(run_dualadapt(tiny_config(), bench, h), ContractError);
}

TEST_CASE("uploads carry exactly the local classifier and the mixture") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  std::vector<WireEvent> events;
  RunHooks h;
  h.on_wire = [&](const WireEvent& e) { events.push_back(e); };
  const auto r = run_dualadapt(cfg, bench, h);
  std::size_t uploads = 0;
  for (const auto& e : events) {
    const auto j = nlohmann::json::parse(e.payload);
    CHECK(wire_param_count(j) == e.param_count);
    if (e.direction != WireEvent::Direction::upload) continue;
    ++uploads;
    const auto u = upload_from_wire(j);
    REQUIRE(u.w_t.has_value());
    CHECK(e.param_count == u.f_l.param_count() + u.w_t->param_count());
    CHECK(j.at("params").size() == 2);
  }
  CHECK(uploads == cfg.rounds * bench.targets.size());
  CHECK_FALSE(r.report.privacy_violating);
}

TEST_CASE("zero rounds reports the pretrained model") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  cfg.rounds = 0;
  const auto r = run_dualadapt(cfg, bench);
  const auto s = run_baseline(Method::source_only, cfg, bench);
  CHECK(r.report.rounds.empty());
  CHECK(r.report.final_eval.per_target_accuracy == s.report.final_eval.per_target_accuracy);
  CHECK(r.report.ledger.rows.empty());
}

TEST_CASE("source only has an empty communication ledger") {
  const auto r = run_baseline(Method::source_only, tiny_config(), tiny_bench());
  CHECK(r.report.ledger.total_upload() == 0);
  CHECK(r.report.ledger.total_broadcast() == 0);
  CHECK_THROWS_AS(run_baseline(Method::dualadapt, tiny_config(), tiny_bench()), ContractError);
}

TEST_CASE("fed_mcd with one client matches the centralized one-to-one model") {
  const auto bench = tiny_bench(1);
  TrainConfig cfg = tiny_config();
  const auto fed = run_baseline(Method::fed_mcd, cfg, bench);
  const auto cen = run_baseline(Method::cent_mcd_one2one, cfg, bench);
  CHECK(fed.models[0].g == cen.models[0].g);
  CHECK(fed.models[0].heads == cen.models[0].heads);
  CHECK(fed.report.final_eval.per_target_accuracy == cen.report.final_eval.per_target_accuracy);
}

TEST_CASE("fed_mcd ledger matches the closed forms") {
  const auto bench = tiny_bench();
  TrainConfig cfg = tiny_config();
  const auto r = run_baseline(Method::fed_mcd, cfg, bench);
  const auto g = r.report.feature_extractor_cost, f = r.report.classifier_cost;
  const auto per = costs::method_client_flops(costs::Method::fed_mcd, costs::FlopCosts{g.flops, f.flops, 0});
  const auto comm = costs::method_communication(costs::Method::fed_mcd, costs::ParamCounts{g.params, f.params, 0, 0});
  for (const auto& row : r.report.ledger.rows) {
    if (row.participant == "server") continue;
    CHECK(row.training_flops == row.examples * per);
    CHECK(row.examples == cfg.client_iters * cfg.client_batch);
    CHECK(row.upload_params == comm.upload);
    CHECK(row.broadcast_params == comm.broadcast);
  }
}

TEST_CASE("centralized modes run and report a single participant") {
  const auto bench = tiny_bench();
  for (Method m : {Method::cent_mcd_one2one, Method::cent_mcd_one2combined, Method::cent_mcd_one2multiple}) {
    const auto r = run_baseline(m, tiny_config(), bench);
    CHECK(r.report.final_eval.per_target_accuracy.size() == 2);
    for (const auto& row : r.report.ledger.rows) {
      CHECK(row.participant == "central");
      CHECK(row.upload_params == 0);
    }
    CHECK_FALSE(r.report.privacy_violating);
  }
  CHECK(run_baseline(Method::fed_oracle, tiny_config(), bench).report.privacy_violating);
}

TEST_CASE("without a domain gap adaptation does not hurt") {
  data::BenchmarkSpec s;
  s.classes = 3;
  s.dims = 4;
  s.per_domain = 300;
  s.target_fraction = 0.2;
  s.center_scale = 2.0;
  s.shifts = {data::ShiftSpec{}, data::ShiftSpec{}};
  s.seed = 3;
  const auto bench = data::gen_benchmark(s);
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 20;
  const double base = run_baseline(Method::source_only, cfg, bench).report.final_eval.mean_accuracy;
  const double da = run_dualadapt(cfg, bench).report.final_eval.mean_accuracy;
  CHECK(da >= base - 0.03);
}

TEST_CASE("report json round trip") {
  const auto r = run_dualadapt(tiny_config(), tiny_bench());
  const auto back = report_from_json(nlohmann::json::parse(r.report.dump()));
  CHECK(back.dump() == r.report.dump());
}
