#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "delsim/canonical.hpp"
#include "delsim/common.hpp"
#include "delsim/digest.hpp"

#include "json.hpp"

namespace delsim {

// ---------------------------------------------------------------------------
// Agent identities and keyed "signatures"
// ---------------------------------------------------------------------------

struct AgentId {
  std::string id;  // "did:sim:<hex>"
  std::string public_key_id;

  friend auto operator<=>(const AgentId&, const AgentId&) = default;
};

// Trusted in-process registry mapping agent ids to signing keys. Signatures
// are keyed tags under the agent's registered key; within the simulator this
// gives authenticity and non-repudiation without real PKI.
class KeyRegistry {
 public:
  // Registers a new agent with a key derived from the registry seed.
  // Duplicate ids are an error.
  AgentId register_agent(const std::string& id);

  bool known(const std::string& id) const { return keys_.count(id) > 0; }

  const AgentId& resolve(const std::string& id) const;

  Digest32 sign(const AgentId& signer, std::span<const std::uint8_t> payload) const;
  bool check(const AgentId& signer, std::span<const std::uint8_t> payload,
             const Digest32& signature) const;

  std::vector<AgentId> agents() const;

  explicit KeyRegistry(std::uint64_t seed = 0) : seed_(seed) {}

 private:
  const Bytes& key_of(const std::string& id) const;

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::map<std::string, AgentId> ids_;
  std::map<std::string, Bytes> keys_;
};

struct SignedEnvelope {
  Bytes payload;
  AgentId signer;
  Digest32 signature;

  static SignedEnvelope seal(const KeyRegistry& reg, const AgentId& signer,
                             Bytes payload);
  bool verify(const KeyRegistry& reg) const;
};

// Claim: "issuer certifies that subject completed task T on date D to
// specification S with quality q".
struct CredentialClaim {
  std::string kind;  // e.g. "task_completion", "human_reviewer", "certified_monitor"
  std::string task_id;
  Tick date = 0;
  Digest32 spec_digest{};
  double quality = 0.0;

  Bytes canonical_bytes() const;
};

struct VerifiableCredential {
  AgentId issuer;
  AgentId subject;
  CredentialClaim claim;
  Digest32 signature{};

  static VerifiableCredential issue(const KeyRegistry& reg, const AgentId& issuer,
                                    const AgentId& subject, CredentialClaim claim);
  bool verify(const KeyRegistry& reg) const;

  Bytes signing_bytes() const;
};

// ---------------------------------------------------------------------------
// Delegation Capability Tokens
// ---------------------------------------------------------------------------

enum class Operation : std::uint8_t { READ = 1, WRITE = 2, EXECUTE = 4 };

using OperationSet = std::set<Operation>;

const char* operation_name(Operation op) noexcept;
std::optional<Operation> operation_from_name(std::string_view name);

enum class CaveatKind : std::uint8_t {
  resource_scope,
  operations,
  expiry,
  max_depth,
  spend_cap,
};

const char* caveat_kind_name(CaveatKind kind) noexcept;

struct Caveat {
  CaveatKind kind;
  // resource_scope -> set of path prefixes; operations -> OperationSet;
  // expiry / max_depth / spend_cap -> u64.
  std::variant<std::set<std::string>, OperationSet, std::uint64_t> value;

  static Caveat scope(std::set<std::string> prefixes);
  static Caveat ops(OperationSet operations);
  static Caveat expiry(Tick tick);
  static Caveat max_depth(std::uint64_t depth);
  static Caveat spend_cap(std::uint64_t micro);

  // Throws InvalidCaveat when the payload is not well-formed for the kind
  // (empty scope or operation set, mismatched variant).
  void validate() const;

  Bytes canonical_bytes() const;

  friend bool operator==(const Caveat&, const Caveat&) = default;
};

// Attenuate-only token. The chain tag is an iterated keyed tag:
//   tag0 = MAC(root_secret, token_id)
//   tag_i = MAC(tag_{i-1}, canonical bytes of caveat i)
// so holders can append caveats offline while only the authority (holding the
// root secret) can verify the full chain.
struct CapabilityToken {
  std::string token_id;
  std::string root_key_id;
  std::vector<Caveat> caveats;
  Digest32 chain_tag{};

  nlohmann::json to_json() const;
  static CapabilityToken from_json(const nlohmann::json& j);
};

struct RequestContext {
  std::string resource;
  Operation operation = Operation::READ;
  Tick now = 0;
  std::uint64_t depth = 0;     // delegation hops from the mint point
  std::uint64_t spend = 0;     // micro-units
};

enum class DenyReason : std::uint8_t {
  invalid_chain,
  scope,
  operation,
  expired,
  depth_exceeded,
  spend_exceeded,
  revoked,
};

const char* deny_reason_name(DenyReason reason) noexcept;

struct VerifyResult {
  bool allowed = false;
  std::optional<DenyReason> reason;
  std::optional<std::size_t> failing_caveat;  // index into token.caveats

  static VerifyResult allow() { return {true, std::nullopt, std::nullopt}; }
  static VerifyResult deny(DenyReason r,
                           std::optional<std::size_t> index = std::nullopt) {
    return {false, r, index};
  }
};

struct RevocationNotice {
  Tick tick = 0;
  std::string revoked;  // token id or agent id
  bool is_agent = false;
};

// Pure attenuation: appends one caveat and advances the chain tag. The
// original token is unmodified.
CapabilityToken attenuate(const CapabilityToken& token, const Caveat& caveat);

// Whether a single caveat admits a request. Exposed for the brute-force
// intersection oracle in tests.
bool caveat_admits(const Caveat& caveat, const RequestContext& request);

// The permission authority: holds root minting secrets, the token registry
// (which agents each token was delegated through), and the revocation sets
// consulted during verification. Single-writer; see module concurrency notes.
class TokenAuthority {
 public:
  explicit TokenAuthority(std::uint64_t seed = 0) : seed_(seed) {}

  // Registers a minting secret, derived deterministically from the authority
  // seed, and returns its id.
  std::string register_root(const std::string& owner_hint = "");

  bool has_root(const std::string& root_key_id) const {
    return roots_.count(root_key_id) > 0;
  }

  CapabilityToken mint(const std::string& root_key_id, const AgentId& holder,
                       const std::vector<Caveat>& initial_caveats);

  // Records a delegation hop for revocation bookkeeping. The token bytes
  // themselves travel via attenuate().
  void record_delegation(const std::string& token_id, const AgentId& to);

  VerifyResult verify(const CapabilityToken& token,
                      const RequestContext& request) const;

  RevocationNotice revoke_token(const std::string& token_id, Tick now);
  RevocationNotice revoke_agent(const AgentId& agent, Tick now);

  // Holder chain recorded for a token, mint holder first.
  const std::vector<std::string>& chain_of(const std::string& token_id) const;

  std::vector<std::string> tokens() const;

  // Chain-tag replay from an explicit secret; used by the offline CLI path.
  static bool replay_chain_tag(const CapabilityToken& token,
                               std::span<const std::uint8_t> root_secret);
  static Digest32 compute_chain_tag(const std::string& token_id,
                                    std::span<const std::uint8_t> root_secret,
                                    const std::vector<Caveat>& caveats);

 private:
  std::uint64_t seed_;
  std::uint64_t root_counter_ = 0;
  std::uint64_t token_counter_ = 0;
  std::map<std::string, Bytes> roots_;
  std::map<std::string, std::vector<std::string>> token_chains_;
  std::map<std::string, std::string> token_root_;
  std::set<std::string> revoked_tokens_;
  std::set<std::string> revoked_agents_;
};

// JSON wire helpers (token wire format fixed by the external interface).
void to_json(nlohmann::json& j, const Caveat& c);
void from_json(const nlohmann::json& j, Caveat& c);

}  // namespace delsim
