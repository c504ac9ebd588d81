#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualadapt/nn.hpp"

namespace dualadapt::costs {

// |m| parameters and ||m|| forward FLOPs for one example.
struct ModuleCost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

ModuleCost module_cost(const nn::ModelParams& m);

enum class Method { fed_dann, fed_mcd, dualadapt };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct FlopCosts {
  std::uint64_t g = 0;  // ||G||
  std::uint64_t f = 0;  // ||F||
  std::uint64_t d = 0;  // ||D||, domain discriminator (fed_dann only)
};

struct ParamCounts {
  std::uint64_t g = 0;  // |G|
  std::uint64_t f = 0;  // |F|
  std::uint64_t w = 0;  // |W|, transmitted density summary (dualadapt only)
  std::uint64_t d = 0;  // |D|, stays on the client; not communicated
};

// On-device training FLOPs per example, backward counted equal to forward.
std::uint64_t method_client_flops(Method method, const FlopCosts& c);

struct Communication {
  std::uint64_t upload = 0;
  std::uint64_t broadcast = 0;
};

Communication method_communication(Method method, const ParamCounts& c);

// One row per participant per round.
struct LedgerRow {
  std::string participant;  // "server", "client{i}", or "central"
  std::size_t round = 0;
  std::uint64_t training_flops = 0;
  std::uint64_t examples = 0;  // per-example training passes behind training_flops
  std::uint64_t upload_params = 0;
  std::uint64_t broadcast_params = 0;
};

struct CostLedger {
  std::vector<LedgerRow> rows;

  void add(LedgerRow row) { rows.push_back(std::move(row)); }
  std::uint64_t total_upload() const;
  std::uint64_t total_broadcast() const;
  std::uint64_t total_client_flops() const;
  std::uint64_t total_client_examples() const;
};

nlohmann::json to_json(const CostLedger& ledger);
CostLedger ledger_from_json(const nlohmann::json& j);

// Rows of the cost table: method, computation, upload, broadcast.
std::string cost_table_csv(const FlopCosts& flops, const ParamCounts& params);

}  // namespace dualadapt::costs
