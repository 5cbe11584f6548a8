#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delsim/contract.hpp"
#include "delsim/coordination.hpp"
#include "delsim/decomposition.hpp"
#include "delsim/market.hpp"
#include "delsim/reputation.hpp"
#include "delsim/task.hpp"
#include "delsim/verification.hpp"

namespace delsim {

enum class PolicyKind : std::uint8_t {
  honest,
  data_poisoner,
  resource_exhauster,
  unresponsive,
  backdoor_implanter,
  reputation_saboteur,
  sybil_operator,
  colluding_ring,
  low_risk_gamer,
};

const char* policy_kind_name(PolicyKind k) noexcept;
std::optional<PolicyKind> policy_kind_from_name(std::string_view name);

struct AdversaryProfile {
  PolicyKind kind = PolicyKind::honest;
  double corruption = 0.0;        // data_poisoner
  double overspend_factor = 2.0;  // resource_exhauster
  Tick after_tick = 0;            // unresponsive
  double false_failure_rate = 1.0;  // reputation_saboteur
  std::uint32_t identities = 3;   // sybil_operator
  std::string ring;               // colluding_ring membership tag
  double max_complexity = 0.3;    // low_risk_gamer

  void validate() const;
};

struct AgentSpec {
  std::string name;
  std::set<std::string> capabilities;
  Amount initial_balance = 50 * kUnit;
  AdversaryProfile policy;
  std::uint32_t capacity = 4;  // max concurrent contracts (span of control)
  bool delegator = false;
  bool verifier = false;
  bool certified_auditor = false;
  bool certified_monitor = false;
  bool proof_capable = false;
  bool human = false;
  bool subcontract = false;  // sub-delegates its leaves when possible
  std::string model_family;
};

struct WorkloadSpec {
  std::uint32_t count = 1;
  std::uint64_t seed = 1;
  std::uint32_t depth = 1;
  std::uint32_t branching = 2;
  GenProfile profile;
  std::vector<TaskNode> explicit_tasks;  // used instead of the generator when non-empty
};

struct SimConfig {
  DecompConfig decomp;
  HumanAllocationPolicy human_policy;
  FloorConfig floor;
  OverheadTable overhead;
  Amount min_stake = 500'000;
  Tick bid_window = 3;
  std::map<std::string, double> weights = {
      {"cost", 0.4}, {"latency", 0.2}, {"risk", 0.3}, {"privacy", 0.1}};
  bool requote = false;
  TrustModel trust;
  ReputationConfig reputation;
  GrantTable grants;
  BreakerConfig breaker;
  StabilityPolicy stability;
  ResponseThresholds response;
  double detect_slo = 0.5;
  Tick dispute_window = 20;
  bool compensation_schedules = true;
  double pass_threshold = 0.8;
  std::uint32_t panel_k = 3;
  Amount panel_pool = 90'000;
  Amount proof_fee = 10'000;
  Amount audit_fee = 30'000;
  std::string mechanism_override;  // "", direct, proof, third_party, consensus
  double spot_check_prob = 0.1;
  double indirect_confidence = 0.5;
  Tick human_approval_latency = 2;
  std::uint64_t max_chain_depth = 2;
  double token_expiry_slack = 6.0;
  Tick task_interval = 25;

  void validate() const;
};

SimConfig config_from_json(const nlohmann::json& j, SimConfig base = {});
nlohmann::json config_to_json(const SimConfig& c);

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  Tick horizon = 1000;
  std::vector<AgentSpec> agents;
  WorkloadSpec workload;
  SimConfig config;
  std::vector<Trigger> environment_feed;

  void validate() const;

  static Scenario from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Replaces the policy of the agent at `index`; the rest of the scenario is
// unchanged.
Scenario inject(Scenario scenario, const AdversaryProfile& adversary,
                std::size_t index);

void to_json(nlohmann::json& j, const AdversaryProfile& p);
void from_json(const nlohmann::json& j, AdversaryProfile& p);
void to_json(nlohmann::json& j, const AgentSpec& a);
void from_json(const nlohmann::json& j, AgentSpec& a);

}  // namespace delsim
