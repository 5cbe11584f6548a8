#pragma once

#include <memory>
#include <string>
#include <vector>

#include "delsim/metrics.hpp"
#include "delsim/scenario.hpp"

namespace delsim {

struct RunResult {
  std::vector<std::string> log_lines;
  std::string event_log_digest;
  Metrics metrics;

  // Offline-audit artifacts.
  std::string ledger_text;        // bank ledger, JSON-lines with header
  nlohmann::json contracts;       // final contract state dumps
  std::string reputation_text;    // reputation ledger, JSON-lines

  nlohmann::json result_json() const;
};

// Deterministic single-threaded event loop over the whole delegation
// lifecycle: decomposition, auction, contracting, token flow, execution,
// monitoring, coordination, verification, settlement, reputation.
// Identical scenario (including seed) -> identical event_log_digest.
RunResult run(const Scenario& scenario);

}  // namespace delsim
