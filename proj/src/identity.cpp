#include "delsim/identity.hpp"

#include <algorithm>

namespace delsim {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_caveat: return "InvalidCaveat";
    case Errc::duplicate_agent: return "DuplicateAgent";
    case Errc::not_found: return "NotFound";
    case Errc::wrong_task: return "WrongTask";
    case Errc::undecomposable_task: return "UndecomposableTask";
    case Errc::invalid_transition: return "InvalidTransition";
    case Errc::funding_failed: return "FundingFailed";
    case Errc::bond_short: return "BondShort";
    case Errc::window_closed: return "WindowClosed";
    case Errc::unsupported: return "Unsupported";
    case Errc::invalid_credential: return "InvalidCredential";
    case Errc::corrupt_snapshot: return "CorruptSnapshot";
    case Errc::invalid_panel: return "InvalidPanel";
    case Errc::uncertified_auditor: return "UncertifiedAuditor";
    case Errc::mechanism_unavailable: return "MechanismUnavailable";
    case Errc::replay_mismatch: return "ReplayMismatch";
    case Errc::config_error: return "ConfigError";
    case Errc::insufficient_funds: return "InsufficientFunds";
    case Errc::invariant_violation: return "InvariantViolation";
  }
  return "Unknown";
}

// --------------------------------------------------------------------------
// KeyRegistry
// --------------------------------------------------------------------------

AgentId KeyRegistry::register_agent(const std::string& id) {
  if (keys_.count(id) > 0) {
    fail(Errc::duplicate_agent, "agent already registered: " + id);
  }
  CanonicalWriter w;
  w.u64(seed_).u64(counter_).str(id);
  Digest32 key = w.digest();
  AgentId agent{id, "k-" + to_hex(as_span(key)).substr(0, 16)};
  ++counter_;
  ids_.emplace(id, agent);
  keys_.emplace(id, Bytes(key.begin(), key.end()));
  return agent;
}

const AgentId& KeyRegistry::resolve(const std::string& id) const {
  auto it = ids_.find(id);
  if (it == ids_.end()) fail(Errc::not_found, "unknown agent: " + id);
  return it->second;
}

const Bytes& KeyRegistry::key_of(const std::string& id) const {
  auto it = keys_.find(id);
  if (it == keys_.end()) fail(Errc::not_found, "unknown agent: " + id);
  return it->second;
}

Digest32 KeyRegistry::sign(const AgentId& signer,
                           std::span<const std::uint8_t> payload) const {
  return hmac_sha256(as_span(key_of(signer.id)), payload);
}

bool KeyRegistry::check(const AgentId& signer,
                        std::span<const std::uint8_t> payload,
                        const Digest32& signature) const {
  auto it = keys_.find(signer.id);
  if (it == keys_.end()) return false;
  // The key id must match the currently active key for the agent.
  if (ids_.at(signer.id).public_key_id != signer.public_key_id) return false;
  return hmac_sha256(as_span(it->second), payload) == signature;
}

std::vector<AgentId> KeyRegistry::agents() const {
  std::vector<AgentId> out;
  out.reserve(ids_.size());
  for (const auto& [_, agent] : ids_) out.push_back(agent);
  return out;
}

// --------------------------------------------------------------------------
// Envelopes and credentials
// --------------------------------------------------------------------------

SignedEnvelope SignedEnvelope::seal(const KeyRegistry& reg, const AgentId& signer,
                                    Bytes payload) {
  SignedEnvelope env;
  env.signature = reg.sign(signer, as_span(payload));
  env.payload = std::move(payload);
  env.signer = signer;
  return env;
}

bool SignedEnvelope::verify(const KeyRegistry& reg) const {
  return reg.check(signer, as_span(payload), signature);
}

Bytes CredentialClaim::canonical_bytes() const {
  CanonicalWriter w;
  w.str(kind).str(task_id).u64(date).bytes(as_span(spec_digest)).f64(quality);
  return w.data();
}

Bytes VerifiableCredential::signing_bytes() const {
  CanonicalWriter w;
  w.str(issuer.id).str(subject.id).bytes(as_span(claim.canonical_bytes()));
  return w.data();
}

VerifiableCredential VerifiableCredential::issue(const KeyRegistry& reg,
                                                 const AgentId& issuer,
                                                 const AgentId& subject,
                                                 CredentialClaim claim) {
  VerifiableCredential cred;
  cred.issuer = issuer;
  cred.subject = subject;
  cred.claim = std::move(claim);
  cred.signature = reg.sign(issuer, as_span(cred.signing_bytes()));
  return cred;
}

bool VerifiableCredential::verify(const KeyRegistry& reg) const {
  return reg.check(issuer, as_span(signing_bytes()), signature);
}

// --------------------------------------------------------------------------
// Caveats
// --------------------------------------------------------------------------

const char* operation_name(Operation op) noexcept {
  switch (op) {
    case Operation::READ: return "READ";
    case Operation::WRITE: return "WRITE";
    case Operation::EXECUTE: return "EXECUTE";
  }
  return "?";
}

std::optional<Operation> operation_from_name(std::string_view name) {
  if (name == "READ") return Operation::READ;
  if (name == "WRITE") return Operation::WRITE;
  if (name == "EXECUTE") return Operation::EXECUTE;
  return std::nullopt;
}

const char* caveat_kind_name(CaveatKind kind) noexcept {
  switch (kind) {
    case CaveatKind::resource_scope: return "resource_scope";
    case CaveatKind::operations: return "operations";
    case CaveatKind::expiry: return "expiry";
    case CaveatKind::max_depth: return "max_depth";
    case CaveatKind::spend_cap: return "spend_cap";
  }
  return "?";
}

Caveat Caveat::scope(std::set<std::string> prefixes) {
  Caveat c{CaveatKind::resource_scope, std::move(prefixes)};
  c.validate();
  return c;
}

Caveat Caveat::ops(OperationSet operations) {
  Caveat c{CaveatKind::operations, std::move(operations)};
  c.validate();
  return c;
}

Caveat Caveat::expiry(Tick tick) { return {CaveatKind::expiry, tick}; }

Caveat Caveat::max_depth(std::uint64_t depth) {
  return {CaveatKind::max_depth, depth};
}

Caveat Caveat::spend_cap(std::uint64_t micro) {
  return {CaveatKind::spend_cap, micro};
}

void Caveat::validate() const {
  switch (kind) {
    case CaveatKind::resource_scope: {
      const auto* prefixes = std::get_if<std::set<std::string>>(&value);
      if (prefixes == nullptr || prefixes->empty()) {
        fail(Errc::invalid_caveat, "resource_scope needs >=1 path prefix");
      }
      return;
    }
    case CaveatKind::operations: {
      const auto* ops = std::get_if<OperationSet>(&value);
      if (ops == nullptr || ops->empty()) {
        fail(Errc::invalid_caveat, "operations needs >=1 operation");
      }
      return;
    }
    case CaveatKind::expiry:
    case CaveatKind::max_depth:
    case CaveatKind::spend_cap:
      if (!std::holds_alternative<std::uint64_t>(value)) {
        fail(Errc::invalid_caveat, "numeric caveat payload expected");
      }
      return;
  }
  fail(Errc::invalid_caveat, "unknown caveat kind");
}

Bytes Caveat::canonical_bytes() const {
  CanonicalWriter w;
  w.u64(static_cast<std::uint64_t>(kind));
  switch (kind) {
    case CaveatKind::resource_scope: {
      const auto& prefixes = std::get<std::set<std::string>>(value);
      w.u64(prefixes.size());
      for (const auto& p : prefixes) w.str(p);
      break;
    }
    case CaveatKind::operations: {
      const auto& ops = std::get<OperationSet>(value);
      std::uint64_t mask = 0;
      for (Operation op : ops) mask |= static_cast<std::uint64_t>(op);
      w.u64(mask);
      break;
    }
    default:
      w.u64(std::get<std::uint64_t>(value));
      break;
  }
  return w.data();
}

bool caveat_admits(const Caveat& caveat, const RequestContext& request) {
  switch (caveat.kind) {
    case CaveatKind::resource_scope: {
      const auto& prefixes = std::get<std::set<std::string>>(caveat.value);
      return std::any_of(prefixes.begin(), prefixes.end(),
                         [&](const std::string& p) {
                           return request.resource.starts_with(p);
                         });
    }
    case CaveatKind::operations:
      return std::get<OperationSet>(caveat.value).count(request.operation) > 0;
    case CaveatKind::expiry:
      // Closed interval: now == expiry is still valid.
      return request.now <= std::get<std::uint64_t>(caveat.value);
    case CaveatKind::max_depth:
      return request.depth <= std::get<std::uint64_t>(caveat.value);
    case CaveatKind::spend_cap:
      return request.spend <= std::get<std::uint64_t>(caveat.value);
  }
  return false;
}

namespace {

DenyReason deny_reason_for(CaveatKind kind) {
  switch (kind) {
    case CaveatKind::resource_scope: return DenyReason::scope;
    case CaveatKind::operations: return DenyReason::operation;
    case CaveatKind::expiry: return DenyReason::expired;
    case CaveatKind::max_depth: return DenyReason::depth_exceeded;
    case CaveatKind::spend_cap: return DenyReason::spend_exceeded;
  }
  return DenyReason::scope;
}

}  // namespace

const char* deny_reason_name(DenyReason reason) noexcept {
  switch (reason) {
    case DenyReason::invalid_chain: return "invalid_chain";
    case DenyReason::scope: return "scope";
    case DenyReason::operation: return "operation";
    case DenyReason::expired: return "expired";
    case DenyReason::depth_exceeded: return "depth_exceeded";
    case DenyReason::spend_exceeded: return "spend_exceeded";
    case DenyReason::revoked: return "revoked";
  }
  return "?";
}

// --------------------------------------------------------------------------
// Tokens
// --------------------------------------------------------------------------

CapabilityToken attenuate(const CapabilityToken& token, const Caveat& caveat) {
  caveat.validate();
  CapabilityToken out = token;
  out.chain_tag = hmac_sha256(as_span(token.chain_tag),
                              as_span(caveat.canonical_bytes()));
  out.caveats.push_back(caveat);
  return out;
}

Digest32 TokenAuthority::compute_chain_tag(const std::string& token_id,
                                           std::span<const std::uint8_t> root_secret,
                                           const std::vector<Caveat>& caveats) {
  CanonicalWriter w;
  w.str(token_id);
  Digest32 tag = hmac_sha256(root_secret, as_span(w.data()));
  for (const Caveat& c : caveats) {
    tag = hmac_sha256(as_span(tag), as_span(c.canonical_bytes()));
  }
  return tag;
}

bool TokenAuthority::replay_chain_tag(const CapabilityToken& token,
                                      std::span<const std::uint8_t> root_secret) {
  return compute_chain_tag(token.token_id, root_secret, token.caveats) ==
         token.chain_tag;
}

std::string TokenAuthority::register_root(const std::string& owner_hint) {
  CanonicalWriter w;
  w.u64(seed_).u64(root_counter_).str(owner_hint);
  Digest32 secret = w.digest();
  std::string id = "root:" + to_hex(as_span(secret)).substr(0, 12);
  ++root_counter_;
  roots_.emplace(id, Bytes(secret.begin(), secret.end()));
  return id;
}

CapabilityToken TokenAuthority::mint(const std::string& root_key_id,
                                     const AgentId& holder,
                                     const std::vector<Caveat>& initial_caveats) {
  auto it = roots_.find(root_key_id);
  if (it == roots_.end()) fail(Errc::not_found, "unknown root key: " + root_key_id);
  for (const Caveat& c : initial_caveats) c.validate();

  CapabilityToken token;
  token.token_id = "tok:" + std::to_string(token_counter_++);
  token.root_key_id = root_key_id;
  token.caveats = initial_caveats;
  token.chain_tag =
      compute_chain_tag(token.token_id, as_span(it->second), token.caveats);
  token_chains_[token.token_id] = {holder.id};
  token_root_[token.token_id] = root_key_id;
  return token;
}

void TokenAuthority::record_delegation(const std::string& token_id,
                                       const AgentId& to) {
  auto it = token_chains_.find(token_id);
  if (it == token_chains_.end()) fail(Errc::not_found, "unknown token: " + token_id);
  it->second.push_back(to.id);
}

VerifyResult TokenAuthority::verify(const CapabilityToken& token,
                                    const RequestContext& request) const {
  auto root = roots_.find(token.root_key_id);
  if (root == roots_.end() || !replay_chain_tag(token, as_span(root->second))) {
    return VerifyResult::deny(DenyReason::invalid_chain);
  }
  if (revoked_tokens_.count(token.token_id) > 0) {
    return VerifyResult::deny(DenyReason::revoked);
  }
  auto chain = token_chains_.find(token.token_id);
  if (chain != token_chains_.end()) {
    for (const std::string& agent : chain->second) {
      if (revoked_agents_.count(agent) > 0) {
        return VerifyResult::deny(DenyReason::revoked);
      }
    }
  }
  // Effective permission set is the intersection of all caveats: each caveat
  // must admit the request; the first failing index is reported.
  for (std::size_t i = 0; i < token.caveats.size(); ++i) {
    if (!caveat_admits(token.caveats[i], request)) {
      return VerifyResult::deny(deny_reason_for(token.caveats[i].kind), i);
    }
  }
  return VerifyResult::allow();
}

RevocationNotice TokenAuthority::revoke_token(const std::string& token_id,
                                              Tick now) {
  if (token_chains_.count(token_id) == 0) {
    fail(Errc::not_found, "unknown token: " + token_id);
  }
  revoked_tokens_.insert(token_id);
  return {now, token_id, false};
}

RevocationNotice TokenAuthority::revoke_agent(const AgentId& agent, Tick now) {
  bool known = false;
  for (const auto& [_, chain] : token_chains_) {
    if (std::find(chain.begin(), chain.end(), agent.id) != chain.end()) {
      known = true;
      break;
    }
  }
  if (!known) fail(Errc::not_found, "agent holds no tokens: " + agent.id);
  revoked_agents_.insert(agent.id);
  return {now, agent.id, true};
}

const std::vector<std::string>& TokenAuthority::chain_of(
    const std::string& token_id) const {
  auto it = token_chains_.find(token_id);
  if (it == token_chains_.end()) fail(Errc::not_found, "unknown token: " + token_id);
  return it->second;
}

std::vector<std::string> TokenAuthority::tokens() const {
  std::vector<std::string> out;
  out.reserve(token_chains_.size());
  for (const auto& [id, _] : token_chains_) out.push_back(id);
  return out;
}

// --------------------------------------------------------------------------
// Wire format
// --------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Caveat& c) {
  j = nlohmann::json{{"kind", caveat_kind_name(c.kind)}};
  switch (c.kind) {
    case CaveatKind::resource_scope: {
      j["value"] = std::get<std::set<std::string>>(c.value);
      break;
    }
    case CaveatKind::operations: {
      std::vector<std::string> names;
      for (Operation op : std::get<OperationSet>(c.value)) {
        names.emplace_back(operation_name(op));
      }
      j["value"] = names;
      break;
    }
    default:
      j["value"] = std::get<std::uint64_t>(c.value);
      break;
  }
}

void from_json(const nlohmann::json& j, Caveat& c) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "resource_scope") {
    c = Caveat{CaveatKind::resource_scope,
               j.at("value").get<std::set<std::string>>()};
  } else if (kind == "operations") {
    OperationSet ops;
    for (const auto& name : j.at("value")) {
      auto op = operation_from_name(name.get<std::string>());
      if (!op) fail(Errc::invalid_caveat, "unknown operation: " + name.dump());
      ops.insert(*op);
    }
    c = Caveat{CaveatKind::operations, std::move(ops)};
  } else if (kind == "expiry" || kind == "max_depth" || kind == "spend_cap") {
    if (!j.at("value").is_number_unsigned()) {
      fail(Errc::invalid_caveat, "numeric caveat must be a non-negative integer");
    }
    CaveatKind k = kind == "expiry"      ? CaveatKind::expiry
                   : kind == "max_depth" ? CaveatKind::max_depth
                                         : CaveatKind::spend_cap;
    c = Caveat{k, j.at("value").get<std::uint64_t>()};
  } else {
    fail(Errc::invalid_caveat, "unknown caveat kind: " + kind);
  }
  c.validate();
}

nlohmann::json CapabilityToken::to_json() const {
  nlohmann::json j;
  j["token_id"] = token_id;
  j["root_key_id"] = root_key_id;
  j["caveats"] = caveats;
  j["chain_tag"] = to_hex(as_span(chain_tag));
  return j;
}

CapabilityToken CapabilityToken::from_json(const nlohmann::json& j) {
  CapabilityToken t;
  t.token_id = j.at("token_id").get<std::string>();
  t.root_key_id = j.at("root_key_id").get<std::string>();
  t.caveats = j.at("caveats").get<std::vector<Caveat>>();
  Bytes tag = from_hex(j.at("chain_tag").get<std::string>());
  if (tag.size() != t.chain_tag.size()) {
    fail(Errc::invalid_caveat, "chain_tag must be 32 bytes of hex");
  }
  std::copy(tag.begin(), tag.end(), t.chain_tag.begin());
  return t;
}

}  // namespace delsim
