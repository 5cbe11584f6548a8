#pragma once

#include <string>
#include <vector>

#include "delsim/common.hpp"
#include "delsim/identity.hpp"

#include "json.hpp"

namespace delsim {

struct TaskCharacteristics {
  double complexity = 0.0;
  double criticality = 0.0;
  double uncertainty = 0.0;
  double verifiability = 1.0;
  double reversibility = 1.0;
  double contextuality = 0.0;
  double subjectivity = 0.0;
  Tick duration_est = 1;            // >= 1
  Amount cost_est = 0;              // micro-units, >= 0
  std::set<std::string> resource_requirements;
  std::set<std::string> constraints;

  void validate() const;
};

enum class Ordering : std::uint8_t { parallel, sequential };

struct TaskNode {
  std::string task_id;
  TaskCharacteristics characteristics;
  std::vector<TaskNode> children;  // empty for leaves
  Ordering ordering = Ordering::parallel;
  std::uint64_t ground_truth = 0;  // hidden oracle seed
  bool human_required = false;

  bool is_leaf() const { return children.empty(); }

  // Stable digest of the tree structure and characteristics; used by the
  // determinism tests.
  Digest32 structural_digest() const;
};

// Producer-claimed work product. `content` carries the claimed ground truth
// and corruption level so the oracle can score it; the digest commits to the
// content bytes.
struct Artifact {
  std::string task_id;
  AgentId producer;
  Bytes content;
  Digest32 content_digest{};
  double quality_hint = 1.0;  // producer-claimed, untrusted
};

// Distribution parameters for synthetic characteristics: uniform within the
// configured band per axis.
struct GenProfile {
  double complexity_min = 0.1, complexity_max = 0.9;
  double criticality_min = 0.0, criticality_max = 0.8;
  double uncertainty_min = 0.0, uncertainty_max = 0.6;
  double verifiability_min = 0.3, verifiability_max = 1.0;
  double reversibility_min = 0.2, reversibility_max = 1.0;
  double contextuality_min = 0.0, contextuality_max = 0.7;
  double subjectivity_min = 0.0, subjectivity_max = 0.5;
  Tick duration_min = 2, duration_max = 30;
  Amount cost_min = 500'000, cost_max = 8'000'000;
  std::vector<std::string> capability_pool = {"code", "data", "research", "ops"};
};

TaskNode generate_task(std::uint64_t seed, std::uint32_t depth,
                       std::uint32_t branching, const GenProfile& profile);

// Expected digest of an honest execution of this task.
Digest32 expected_digest(const TaskNode& task);

// Deterministic executor used by agent policies: corruption 0 reproduces the
// oracle digest exactly.
Artifact make_artifact(const TaskNode& task, const AgentId& producer,
                       double corruption);

// quality = max(0, 1 - corruption)^2; endpoints fixed (0 -> 1.0, 1 -> 0.0).
double degradation(double corruption);

// Pure scoring function against the hidden ground truth.
// Throws WrongTask when artifact.task_id != task.task_id.
double oracle_evaluate(const TaskNode& task, const Artifact& artifact);

struct FloorConfig {
  double criticality_max = 0.2;   // theta_crit
  double uncertainty_max = 0.3;   // theta_unc
  Tick duration_max = 10;         // theta_dur
  double overhead_ratio = 0.5;    // phi
};

enum class FloorDecision : std::uint8_t { ExecuteDirectly, Delegate };

// Tasks below the complexity floor bypass delegation: low criticality, low
// uncertainty, short duration, and overhead at least phi * cost_est
// (boundary inclusive).
FloorDecision complexity_floor(const TaskNode& task, Amount overhead,
                               const FloorConfig& config);

// JSON fixture format for task trees.
void to_json(nlohmann::json& j, const TaskCharacteristics& c);
void from_json(const nlohmann::json& j, TaskCharacteristics& c);
void to_json(nlohmann::json& j, const TaskNode& n);
void from_json(const nlohmann::json& j, TaskNode& n);

}  // namespace delsim
