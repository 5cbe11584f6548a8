#pragma once

#include <optional>
#include <string>
#include <vector>

#include "delsim/identity.hpp"
#include "delsim/monitoring.hpp"
#include "delsim/reputation.hpp"
#include "delsim/task.hpp"

namespace delsim {

enum class TriggerKind : std::uint8_t {
  // External
  SpecChange,
  Cancellation,
  ResourceShift,
  Preemption,
  SecurityFlag,
  // Internal
  PerfDegradation,
  BudgetOverrun,
  VerificationFailure,
  Unresponsive,
};

const char* trigger_kind_name(TriggerKind k) noexcept;
bool trigger_is_internal(TriggerKind k) noexcept;

struct Trigger {
  TriggerKind kind;
  std::string task_id;
  std::vector<std::string> evidence;  // event/ledger references
  Tick tick = 0;
  double severity = 1.0;

  void validate() const;  // internal kinds require non-empty evidence
};

enum class ResponseAction : std::uint8_t {
  AdjustParams,
  ReDelegateSubtask,
  ReDecompose,
  Escalate,
  Terminate,
};

const char* response_action_name(ResponseAction a) noexcept;

enum class Urgency : std::uint8_t { immediate, scheduled };

struct ResponsePlan {
  ResponseAction action = ResponseAction::AdjustParams;
  Urgency urgency = Urgency::scheduled;
  std::string task_id;
  std::string contract_id;
  bool uses_backup = false;
};

struct StabilityPolicy {
  Tick rebid_cooldown = 10;
  // Damping lives in ReputationConfig; referenced here, implemented once.
  Amount redelegation_base_fee = 20'000;
  std::uint32_t max_redelegations = 4;

  // Non-decreasing fee for the n-th re-delegation (1-based).
  Amount fee(std::uint32_t n) const {
    return redelegation_base_fee * static_cast<Amount>(n);
  }
};

struct DetectConfig {
  double slo_fraction = 0.5;   // observed progress below this share of plan
  Tick grace = 15;             // = 3 reporting cadences by default
  double budget_units = 100.0; // resource units allocated
};

// Monitoring-facing view of one active contract.
struct ContractView {
  std::string task_id;
  std::string contract_id;
  Tick start_tick = 0;
  Tick duration_est = 1;
  Tick cadence = 5;
  bool backup_set = false;
};

// Deterministic rule-based trigger detection over the event stream plus the
// external feed: external triggers pass through, then BudgetOverrun,
// PerfDegradation, Unresponsive in that order.
std::vector<Trigger> detect(const ContractView& view,
                            const std::vector<ProgressEvent>& events,
                            const std::vector<Trigger>& environment_feed,
                            Tick now, const DetectConfig& config);

struct ResponseThresholds {
  double reversibility_min = 0.3;  // rho
  double criticality_max = 0.7;    // kappa
  double severe_degradation = 0.5;
};

// Decision table gated by reversibility/criticality: failures on irreversible
// high-criticality tasks only terminate or escalate.
ResponsePlan select_response(const Trigger& trigger,
                             const TaskCharacteristics& characteristics,
                             bool alternatives_available, bool backup_set,
                             const AuthorityGrant& grant,
                             const ResponseThresholds& thresholds);

enum class StabilityDecision : std::uint8_t { Proceed, Defer, Abort };

struct StabilityOutcome {
  StabilityDecision decision = StabilityDecision::Proceed;
  Tick defer_until = 0;
  Amount fee = 0;
};

// Market stability gate on a proposed re-delegation given this task's prior
// re-delegation ticks.
StabilityOutcome apply_stability(const StabilityPolicy& policy,
                                 const std::vector<Tick>& history, Tick now);

struct StateSnapshot {
  std::string task_id;
  double fraction = 0.0;
  std::vector<Digest32> artifact_digests;
  Tick tick = 0;
  AgentId producer;
  Digest32 signature{};

  Bytes signing_bytes() const;
  nlohmann::json to_json() const;
  static StateSnapshot from_json(const nlohmann::json& j);
};

// Digest of the partial artifact at a checkpoint fraction; recomputable by
// any holder of the task node.
Digest32 partial_artifact_digest(const TaskNode& task, double fraction);

StateSnapshot checkpoint(const KeyRegistry& reg, const TaskNode& task,
                         const AgentId& executor, double fraction, Tick now);

// Validates signature and digests before a new delegatee continues from the
// snapshot's fraction. Throws CorruptSnapshot.
double resume(const KeyRegistry& reg, const TaskNode& task,
              const StateSnapshot& snapshot);

void to_json(nlohmann::json& j, const Trigger& t);
void from_json(const nlohmann::json& j, Trigger& t);

}  // namespace delsim
