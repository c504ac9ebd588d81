#include "dualadapt/costs.hpp"

#include <sstream>

#include "dualadapt/error.hpp"

namespace dualadapt::costs {

using nlohmann::json;

ModuleCost module_cost(const nn::ModelParams& m) {
  ModuleCost c;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    c.params += l.in() * l.out() + l.out();
    c.flops += nn::layer_flops(l, i + 1 < m.layers.size());
  }
  return c;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::fed_dann:
      return "fed_dann";
    case Method::fed_mcd:
      return "fed_mcd";
    case Method::dualadapt:
      return "dualadapt";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "fed_dann") return Method::fed_dann;
  if (s == "fed_mcd") return Method::fed_mcd;
  if (s == "dualadapt") return Method::dualadapt;
  throw ContractError("unknown cost method '" + s + "'");
}

std::uint64_t method_client_flops(Method method, const FlopCosts& c) {
  switch (method) {
    case Method::fed_dann:
      // target through G, D; source through G, F, D; each forward + backward
      return 2 * (c.g + c.d) + 2 * (c.g + c.f + c.d);
    case Method::fed_mcd:
      return 2 * (c.g + 2 * c.f) + 2 * (c.g + 2 * c.f);
    case Method::dualadapt:
      // forward G, F_g, F_l and backward F_l
      return c.g + 3 * c.f;
  }
  throw ContractError("unknown method");
}

Communication method_communication(Method method, const ParamCounts& c) {
  switch (method) {
    case Method::fed_dann:
      return {c.g + c.f, c.g + c.f};
    case Method::fed_mcd:
      return {c.g + 2 * c.f, c.g + 2 * c.f};
    case Method::dualadapt:
      return {c.f + c.w, c.g + c.f + c.w};
  }
  throw ContractError("unknown method");
}

std::uint64_t CostLedger::total_upload() const {
  std::uint64_t s = 0;
  for (const auto& r : rows) s += r.upload_params;
  return s;
}

std::uint64_t CostLedger::total_broadcast() const {
  std::uint64_t s = 0;
  for (const auto& r : rows) s += r.broadcast_params;
  return s;
}

std::uint64_t CostLedger::total_client_flops() const {
  std::uint64_t s = 0;
  for (const auto& r : rows)
    if (r.participant.rfind("client", 0) == 0) s += r.training_flops;
  return s;
}

std::uint64_t CostLedger::total_client_examples() const {
  std::uint64_t s = 0;
  for (const auto& r : rows)
    if (r.participant.rfind("client", 0) == 0) s += r.examples;
  return s;
}

json to_json(const CostLedger& ledger) {
  json rows = json::array();
  for (const auto& r : ledger.rows) {
    rows.push_back(json{{"participant", r.participant},
                        {"round", r.round},
                        {"training_flops", r.training_flops},
                        {"examples", r.examples},
                        {"upload_params", r.upload_params},
                        {"broadcast_params", r.broadcast_params}});
  }
  return rows;
}

CostLedger ledger_from_json(const json& j) {
  CostLedger l;
  for (const auto& r : j) {
    l.add(LedgerRow{r.at("participant").get<std::string>(), r.at("round").get<std::size_t>(),
                    r.at("training_flops").get<std::uint64_t>(), r.at("examples").get<std::uint64_t>(),
                    r.at("upload_params").get<std::uint64_t>(), r.at("broadcast_params").get<std::uint64_t>()});
  }
  return l;
}

std::string cost_table_csv(const FlopCosts& flops, const ParamCounts& params) {
  std::ostringstream out;
  out << "method,computation,upload,broadcast\n";
  for (Method m : {Method::fed_dann, Method::fed_mcd, Method::dualadapt}) {
    const auto comm = method_communication(m, params);
    out << to_string(m) << ',' << method_client_flops(m, flops) << ',' << comm.upload << ',' << comm.broadcast << '\n';
  }
  return out.str();
}

}  // namespace dualadapt::costs
