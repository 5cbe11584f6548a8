#pragma once

#include <map>
#include <string>
#include <vector>

#include "delsim/monitoring.hpp"
#include "delsim/task.hpp"
#include "delsim/verification.hpp"

namespace delsim {

// Market-side view used while decomposing: who can do what, how reliably, and
// which verification modes the market offers.
struct CapabilityEntry {
  std::string agent_id;
  std::set<std::string> capabilities;
  double reliability = 0.9;   // historical completion statistic
  double cost_factor = 1.0;   // multiplier over task cost_est
  double speed_factor = 1.0;  // multiplier over task duration_est
  bool verifier = false;      // can sit on consensus panels
  bool certified_auditor = false;
  bool proof_capable = false;
  bool human = false;         // human reviewer node
};

class CapabilityRegistry {
 public:
  void add(CapabilityEntry entry);
  bool empty() const { return entries_.empty(); }

  const std::vector<CapabilityEntry>& entries() const { return entries_; }

  // Agents holding every capability in the set.
  std::vector<const CapabilityEntry*> capable_of(
      const std::set<std::string>& capabilities) const;

  bool has_human_reviewers() const;
  std::size_t verifier_count() const;
  bool has_certified_auditor(const std::set<std::string>& capabilities) const;
  bool has_proof_capable() const;

  bool supports_direct = true;  // delegator-side outcome inspection offered

  static CapabilityRegistry from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  std::vector<CapabilityEntry> entries_;
};

struct LeafAssignmentPlan {
  TaskNode node;  // possibly synthetic (manufactured by splitting)
  std::set<std::string> required_capabilities;
  std::vector<std::string> candidate_verification_modes;
  std::uint32_t refine_depth = 0;
};

struct ProposalEstimates {
  double success_prob = 1.0;
  Amount total_cost = 0;
  Tick makespan = 0;
};

struct DecompositionProposal {
  std::string proposal_id;
  std::string root_task_id;
  std::vector<LeafAssignmentPlan> leaves;
  // Execution ordering edges between leaf task ids (acyclic, covers leaves).
  std::vector<std::pair<std::string, std::string>> dag;
  ProposalEstimates estimates;

  const LeafAssignmentPlan* find_leaf(const std::string& task_id) const;
};

struct DecompConfig {
  double tau_v = 0.6;          // minimum leaf verifiability
  double tau_s = 0.7;          // subjectivity above this needs a human
  double delta_v = 0.2;        // verifiability uplift per split
  std::uint32_t max_refine_depth = 6;
  std::uint32_t split_branching = 2;
  std::uint32_t proposal_count = 3;  // k
};

struct HumanAllocationPolicy {
  double subjectivity_threshold = 0.7;
  double criticality_threshold = 0.95;
  double human_latency_mult = 10.0;
  double human_cost_mult = 3.0;
};

// Reporting/verification defaults per policy mode, keyed by required
// assurance (= leaf criticality); the cheapest admissible row wins.
struct ModeRow {
  PolicyMode mode;
  double assurance;
  Amount verification_cost;
  Tick cadence;
  Granularity granularity;
  bool escrow_trigger;
};

const std::vector<ModeRow>& default_mode_table();

struct TaskSpecification {
  std::string task_id;
  std::string role;
  Amount spend_cap = 0;
  std::set<std::string> resource_scope;
  Tick reporting_cadence = 5;
  Granularity reporting_granularity = Granularity::L1;
  std::set<std::string> required_certifications;
  VerificationPolicy verification_policy;
  bool human_required = false;

  Digest32 digest() const;
};

// Generates up to k contract-first proposals, sorted by scalarized estimate.
// Throws UndecomposableTask when no proposal can satisfy the contract-first
// property (missing capability, or refinement depth exhausted on every
// variant).
std::vector<DecompositionProposal> propose(const TaskNode& root,
                                           const CapabilityRegistry& registry,
                                           std::uint32_t k,
                                           const DecompConfig& config);

// Recursively splits leaves that cannot be verified until every leaf has a
// candidate verification mode and verifiability >= tau_v, or is marked
// human_required. Throws UndecomposableTask when max_refine_depth is hit.
DecompositionProposal refine_contract_first(DecompositionProposal proposal,
                                            const CapabilityRegistry& registry,
                                            const DecompConfig& config);

// Marks nodes exceeding the policy thresholds for human allocation and
// applies the human latency/cost multipliers to the estimates.
DecompositionProposal mark_human_nodes(DecompositionProposal proposal,
                                       const HumanAllocationPolicy& policy,
                                       const CapabilityRegistry& registry);

// Populates the final specification for one refined leaf.
TaskSpecification finalize(const LeafAssignmentPlan& leaf, Amount budget_share,
                           const DecompConfig& config);

// Estimates recomputed from the current leaves + DAG + registry statistics.
ProposalEstimates estimate(const DecompositionProposal& proposal,
                           const CapabilityRegistry& registry);

// Longest weighted path through the proposal DAG (leaf weight = duration,
// human-marked leaves scaled by the latency multiplier).
Tick dag_makespan(const DecompositionProposal& proposal,
                  double human_latency_mult);

void to_json(nlohmann::json& j, const LeafAssignmentPlan& p);
void from_json(const nlohmann::json& j, LeafAssignmentPlan& p);
void to_json(nlohmann::json& j, const DecompositionProposal& p);
void from_json(const nlohmann::json& j, DecompositionProposal& p);
void to_json(nlohmann::json& j, const TaskSpecification& s);
void from_json(const nlohmann::json& j, TaskSpecification& s);

}  // namespace delsim
