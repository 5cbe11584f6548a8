#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "delsim/monitoring.hpp"
#include "delsim/task.hpp"

namespace delsim {

enum class PolicyMode : std::uint8_t { strict, standard, spot };

const char* policy_mode_name(PolicyMode m) noexcept;
std::optional<PolicyMode> policy_mode_from_name(std::string_view name);

enum class Mechanism : std::uint8_t { direct, third_party, proof, consensus };

const char* mechanism_name(Mechanism m) noexcept;

struct PolicyArtifact {
  std::string type;  // unit_test_log | proof_trace | audit_report | consensus_verdict
  std::string validator;  // capability tag of the required validator
  bool signature_required = false;
  nlohmann::json params;  // opaque passthrough (circuit_hash, proof_protocol, ...)
};

struct VerificationPolicy {
  PolicyMode mode = PolicyMode::standard;
  std::vector<PolicyArtifact> artifacts;
  bool escrow_trigger = false;
  double pass_threshold = 0.8;  // inclusive

  // strict mode requires at least one artifact with signature_required.
  void validate() const;
};

// Emulated succinct proof: a keyed commitment over (program, input, output)
// under a verifier-shared key. Not zero-knowledge and not publicly
// verifiable; it preserves the constant-cost verify interface only.
struct ProofArtifact {
  std::string program_id;
  Digest32 input_digest{};
  Digest32 output_digest{};
  Digest32 commitment{};

  static ProofArtifact commit(std::span<const std::uint8_t> shared_key,
                              const std::string& program_id,
                              const Digest32& input_digest,
                              const Digest32& output_digest);
  Bytes commitment_bytes() const;
};

struct Verdict {
  bool pass = false;
  double quality = 0.0;
  Mechanism mechanism = Mechanism::direct;
  std::vector<std::string> evidence;
  std::vector<AgentId> verifiers;
  std::vector<Digest32> signatures;

  Bytes signing_bytes() const;
};

// Direct outcome verification against the task oracle.
// Throws MechanismUnavailable when the policy cannot use the oracle.
Verdict verify_direct(const TaskNode& task, const Artifact& artifact,
                      const VerificationPolicy& policy);

// Constant-cost proof check: commitment must recompute and digests must match
// expectations.
Verdict verify_proof(const ProofArtifact& proof,
                     std::span<const std::uint8_t> shared_key,
                     const Digest32& expected_input,
                     const Digest32& expected_output);

struct AuditorDirectory {
  std::function<bool(const std::string& agent, const std::string& capability)>
      has_capability;
  std::function<bool(const std::string& agent)> is_certified;
};

// Third-party audit: a certified auditor runs the oracle on the delegator's
// behalf and signs the verdict. Throws UncertifiedAuditor.
Verdict verify_third_party(const KeyRegistry& reg, const TaskNode& task,
                           const Artifact& artifact, const AgentId& auditor,
                           const std::string& required_capability,
                           const AuditorDirectory& directory,
                           const VerificationPolicy& policy);

struct PanelVerifier {
  AgentId agent;
  // Independent evaluation: honest verifiers consult the oracle, adversarial
  // ones follow their profile.
  std::function<bool(const TaskNode&, const Artifact&)> evaluate;
};

struct PanelPayout {
  AgentId agent;
  Amount reward = 0;
};

struct ConsensusOutcome {
  Verdict verdict;
  std::vector<PanelPayout> payouts;  // ordered by agent id
};

// Schelling-game consensus: binary votes, majority wins, pool split equally
// among majority voters (integer remainder to the lexicographically first
// majority voter). k must be odd and >= 3.
ConsensusOutcome schelling_consensus(const KeyRegistry& reg, const TaskNode& task,
                                     const Artifact& artifact,
                                     const std::vector<PanelVerifier>& panel,
                                     Amount reward_pool,
                                     const VerificationPolicy& policy);

enum class ChainStage : std::uint8_t { work, attestations };

struct CompositeVerdict {
  Verdict verdict;
  std::optional<ChainStage> failed_stage;
  std::optional<std::size_t> failing_link;  // when stage 2 failed
};

// Two-stage recursive verification: the delegatee's own work plus the
// attestation chain covering its sub-delegatees.
CompositeVerdict verify_chain(const KeyRegistry& reg, const Verdict& work,
                              const std::vector<AttestationReport>& chain,
                              const ChainContext& ctx);

// Signed non-repudiable receipt for a finalized verdict.
VerifiableCredential issue_completion_credential(
    const KeyRegistry& reg, const AgentId& delegator, const AgentId& delegatee,
    const std::string& task_id, Tick date, const Digest32& spec_digest,
    const Verdict& verdict);

void to_json(nlohmann::json& j, const PolicyArtifact& a);
void from_json(const nlohmann::json& j, PolicyArtifact& a);
void to_json(nlohmann::json& j, const VerificationPolicy& p);
void from_json(const nlohmann::json& j, VerificationPolicy& p);

}  // namespace delsim
