#pragma once

#include <map>
#include <string>
#include <vector>

#include "delsim/common.hpp"
#include "delsim/digest.hpp"

#include "json.hpp"

namespace delsim {

// Every metric is recomputable from the event log alone; the log is the
// single source of truth.
struct Metrics {
  double completion_rate = 0.0;
  std::uint64_t work_units = 0;
  std::uint64_t work_completed = 0;
  Amount total_cost = 0;
  double mean_makespan = 0.0;
  std::uint64_t roots_completed = 0;
  std::uint64_t redelegation_count = 0;
  std::uint64_t oscillation_max_per_task = 0;
  std::uint64_t breach_detections = 0;
  std::map<std::string, Amount> earnings_by_policy;  // final - initial
  std::map<std::string, Amount> earnings_by_agent;
  // agent -> [(tick, composite)]
  std::map<std::string, std::vector<std::pair<Tick, double>>> reputation_trajectories;

  nlohmann::json to_json() const;
};

// Lowercase hex of the 32-byte hash over the concatenated canonical lines
// (each line terminated by '\n').
std::string log_digest(const std::vector<std::string>& lines);

Metrics compute_metrics(const std::vector<nlohmann::json>& events);

struct ReplayResult {
  std::string digest;
  Metrics metrics;
};

// Parses and audits a persisted log (seq contiguity, per-line JSON, ledger
// conservation including final balances), then recomputes digest and metrics
// without re-simulating. Throws ReplayMismatch on any corruption.
ReplayResult replay_log(const std::vector<std::string>& lines);

std::vector<nlohmann::json> parse_log(const std::vector<std::string>& lines);

}  // namespace delsim
