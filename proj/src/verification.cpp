#include "delsim/verification.hpp"

#include <algorithm>

namespace delsim {

const char* policy_mode_name(PolicyMode m) noexcept {
  switch (m) {
    case PolicyMode::strict: return "strict";
    case PolicyMode::standard: return "standard";
    case PolicyMode::spot: return "spot";
  }
  return "?";
}

std::optional<PolicyMode> policy_mode_from_name(std::string_view name) {
  if (name == "strict") return PolicyMode::strict;
  if (name == "standard") return PolicyMode::standard;
  if (name == "spot") return PolicyMode::spot;
  return std::nullopt;
}

const char* mechanism_name(Mechanism m) noexcept {
  switch (m) {
    case Mechanism::direct: return "direct";
    case Mechanism::third_party: return "third_party";
    case Mechanism::proof: return "proof";
    case Mechanism::consensus: return "consensus";
  }
  return "?";
}

void VerificationPolicy::validate() const {
  if (pass_threshold < 0.0 || pass_threshold > 1.0) {
    fail(Errc::config_error, "pass_threshold outside [0,1]");
  }
  if (mode == PolicyMode::strict) {
    bool signed_artifact =
        std::any_of(artifacts.begin(), artifacts.end(),
                    [](const PolicyArtifact& a) { return a.signature_required; });
    if (!signed_artifact) {
      fail(Errc::config_error,
           "strict mode requires a signature_required artifact");
    }
  }
}

Bytes ProofArtifact::commitment_bytes() const {
  CanonicalWriter w;
  w.str(program_id).bytes(as_span(input_digest)).bytes(as_span(output_digest));
  return w.data();
}

ProofArtifact ProofArtifact::commit(std::span<const std::uint8_t> shared_key,
                                    const std::string& program_id,
                                    const Digest32& input_digest,
                                    const Digest32& output_digest) {
  ProofArtifact p;
  p.program_id = program_id;
  p.input_digest = input_digest;
  p.output_digest = output_digest;
  p.commitment = hmac_sha256(shared_key, as_span(p.commitment_bytes()));
  return p;
}

Bytes Verdict::signing_bytes() const {
  CanonicalWriter w;
  w.u64(pass ? 1 : 0).f64(quality).u64(static_cast<std::uint64_t>(mechanism));
  w.u64(evidence.size());
  for (const auto& e : evidence) w.str(e);
  return w.data();
}

Verdict verify_direct(const TaskNode& task, const Artifact& artifact,
                      const VerificationPolicy& policy) {
  Verdict v;
  v.mechanism = Mechanism::direct;
  v.quality = oracle_evaluate(task, artifact);
  v.pass = v.quality >= policy.pass_threshold;
  v.evidence.push_back("oracle:" + task.task_id);
  return v;
}

Verdict verify_proof(const ProofArtifact& proof,
                     std::span<const std::uint8_t> shared_key,
                     const Digest32& expected_input,
                     const Digest32& expected_output) {
  Verdict v;
  v.mechanism = Mechanism::proof;
  const bool commits =
      hmac_sha256(shared_key, as_span(proof.commitment_bytes())) ==
      proof.commitment;
  const bool matches = proof.input_digest == expected_input &&
                       proof.output_digest == expected_output;
  v.pass = commits && matches;
  v.quality = v.pass ? 1.0 : 0.0;
  v.evidence.push_back("proof:" + proof.program_id);
  return v;
}

Verdict verify_third_party(const KeyRegistry& reg, const TaskNode& task,
                           const Artifact& artifact, const AgentId& auditor,
                           const std::string& required_capability,
                           const AuditorDirectory& directory,
                           const VerificationPolicy& policy) {
  const bool capable = directory.has_capability &&
                       directory.has_capability(auditor.id, required_capability);
  const bool certified =
      directory.is_certified && directory.is_certified(auditor.id);
  if (!capable || !certified) {
    fail(Errc::uncertified_auditor, "auditor " + auditor.id +
                                        " lacks capability or certification");
  }
  Verdict v;
  v.mechanism = Mechanism::third_party;
  v.quality = oracle_evaluate(task, artifact);
  v.pass = v.quality >= policy.pass_threshold;
  v.evidence.push_back("audit:" + auditor.id);
  v.verifiers.push_back(auditor);
  v.signatures.push_back(reg.sign(auditor, as_span(v.signing_bytes())));
  return v;
}

ConsensusOutcome schelling_consensus(const KeyRegistry& reg, const TaskNode& task,
                                     const Artifact& artifact,
                                     const std::vector<PanelVerifier>& panel,
                                     Amount reward_pool,
                                     const VerificationPolicy& policy) {
  if (panel.size() < 3 || panel.size() % 2 == 0) {
    fail(Errc::invalid_panel, "panel must be odd and >= 3");
  }
  if (reward_pool <= 0) fail(Errc::invalid_panel, "reward pool must be > 0");
  (void)policy;

  // Deterministic aggregation order regardless of caller order.
  std::vector<const PanelVerifier*> ordered;
  ordered.reserve(panel.size());
  for (const PanelVerifier& p : panel) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const PanelVerifier* a, const PanelVerifier* b) {
              return a->agent.id < b->agent.id;
            });

  std::vector<bool> votes;
  votes.reserve(ordered.size());
  std::size_t ayes = 0;
  for (const PanelVerifier* p : ordered) {
    bool vote = p->evaluate(task, artifact);
    votes.push_back(vote);
    if (vote) ++ayes;
  }
  const bool majority_pass = ayes * 2 > ordered.size();

  ConsensusOutcome out;
  out.verdict.mechanism = Mechanism::consensus;
  out.verdict.pass = majority_pass;
  out.verdict.evidence.push_back("panel:k=" + std::to_string(ordered.size()));

  std::size_t majority_count = majority_pass ? ayes : ordered.size() - ayes;
  Amount share = reward_pool / static_cast<Amount>(majority_count);
  Amount remainder = reward_pool % static_cast<Amount>(majority_count);

  // Quality for the credential: mean oracle score over majority voters'
  // claimed evaluation; binary votes map to {0,1}.
  double quality_sum = 0.0;
  bool first_majority = true;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    PanelPayout payout{ordered[i]->agent, 0};
    if (votes[i] == majority_pass) {
      payout.reward = share + (first_majority ? remainder : 0);
      first_majority = false;
      quality_sum += votes[i] ? 1.0 : 0.0;
      out.verdict.verifiers.push_back(ordered[i]->agent);
    }
    out.payouts.push_back(payout);
  }
  out.verdict.quality = quality_sum / static_cast<double>(majority_count);
  for (const AgentId& a : out.verdict.verifiers) {
    out.verdict.signatures.push_back(
        reg.sign(a, as_span(out.verdict.signing_bytes())));
  }
  return out;
}

CompositeVerdict verify_chain(const KeyRegistry& reg, const Verdict& work,
                              const std::vector<AttestationReport>& chain,
                              const ChainContext& ctx) {
  CompositeVerdict out;
  out.verdict = work;
  if (!work.pass) {
    out.verdict.pass = false;
    out.failed_stage = ChainStage::work;
    return out;
  }
  ChainCheck check = verify_attestation_chain(reg, chain, ctx);
  if (!check.valid) {
    out.verdict.pass = false;
    out.verdict.quality = 0.0;
    out.failed_stage = ChainStage::attestations;
    out.failing_link = check.failing_link;
    return out;
  }
  out.verdict.evidence.push_back("attestation_chain:depth=" +
                                 std::to_string(chain.size()));
  return out;
}

VerifiableCredential issue_completion_credential(
    const KeyRegistry& reg, const AgentId& delegator, const AgentId& delegatee,
    const std::string& task_id, Tick date, const Digest32& spec_digest,
    const Verdict& verdict) {
  CredentialClaim claim;
  claim.kind = verdict.pass ? "task_completion" : "task_failure";
  claim.task_id = task_id;
  claim.date = date;
  claim.spec_digest = spec_digest;
  claim.quality = verdict.quality;
  return VerifiableCredential::issue(reg, delegator, delegatee, std::move(claim));
}

// --------------------------------------------------------------------------
// Wire format: field names match the protocol listing exactly.
// --------------------------------------------------------------------------

void to_json(nlohmann::json& j, const PolicyArtifact& a) {
  j = nlohmann::json{{"type", a.type},
                     {"validator", a.validator},
                     {"signature_required", a.signature_required}};
  if (!a.params.is_null() && !a.params.empty()) {
    for (auto it = a.params.begin(); it != a.params.end(); ++it) {
      j[it.key()] = it.value();
    }
  }
}

void from_json(const nlohmann::json& j, PolicyArtifact& a) {
  a = PolicyArtifact{};
  j.at("type").get_to(a.type);
  a.validator = j.value("validator", "");
  a.signature_required = j.value("signature_required", false);
  // Unknown fields (circuit_hash, proof_protocol, ...) are kept opaquely.
  a.params = nlohmann::json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "type" && it.key() != "validator" &&
        it.key() != "signature_required") {
      a.params[it.key()] = it.value();
    }
  }
}

void to_json(nlohmann::json& j, const VerificationPolicy& p) {
  j = nlohmann::json{{"mode", policy_mode_name(p.mode)},
                     {"artifacts", p.artifacts},
                     {"escrow_trigger", p.escrow_trigger}};
}

void from_json(const nlohmann::json& j, VerificationPolicy& p) {
  p = VerificationPolicy{};
  auto mode = policy_mode_from_name(j.at("mode").get<std::string>());
  if (!mode) fail(Errc::config_error, "unknown verification mode");
  p.mode = *mode;
  if (j.contains("artifacts")) {
    p.artifacts = j.at("artifacts").get<std::vector<PolicyArtifact>>();
  }
  p.escrow_trigger = j.value("escrow_trigger", false);
  if (j.contains("pass_threshold")) {
    p.pass_threshold = j.at("pass_threshold").get<double>();
  }
  p.validate();
}

}  // namespace delsim
