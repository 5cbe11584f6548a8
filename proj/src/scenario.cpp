#include "delsim/scenario.hpp"

#include <cmath>

namespace delsim {

const char* policy_kind_name(PolicyKind k) noexcept {
  switch (k) {
    case PolicyKind::honest: return "honest";
    case PolicyKind::data_poisoner: return "data_poisoner";
    case PolicyKind::resource_exhauster: return "resource_exhauster";
    case PolicyKind::unresponsive: return "unresponsive";
    case PolicyKind::backdoor_implanter: return "backdoor_implanter";
    case PolicyKind::reputation_saboteur: return "reputation_saboteur";
    case PolicyKind::sybil_operator: return "sybil_operator";
    case PolicyKind::colluding_ring: return "colluding_ring";
    case PolicyKind::low_risk_gamer: return "low_risk_gamer";
  }
  return "?";
}

std::optional<PolicyKind> policy_kind_from_name(std::string_view name) {
  for (PolicyKind k :
       {PolicyKind::honest, PolicyKind::data_poisoner,
        PolicyKind::resource_exhauster, PolicyKind::unresponsive,
        PolicyKind::backdoor_implanter, PolicyKind::reputation_saboteur,
        PolicyKind::sybil_operator, PolicyKind::colluding_ring,
        PolicyKind::low_risk_gamer}) {
    if (name == policy_kind_name(k)) return k;
  }
  return std::nullopt;
}

void AdversaryProfile::validate() const {
  if (corruption < 0.0 || corruption > 1.0) {
    fail(Errc::config_error, "corruption outside [0,1]");
  }
  if (false_failure_rate < 0.0 || false_failure_rate > 1.0) {
    fail(Errc::config_error, "false_failure_rate outside [0,1]");
  }
  if (overspend_factor < 0.0) {
    fail(Errc::config_error, "overspend_factor must be >= 0");
  }
  if (kind == PolicyKind::sybil_operator && identities < 1) {
    fail(Errc::config_error, "sybil_operator needs >= 1 identity");
  }
  if (max_complexity < 0.0 || max_complexity > 1.0) {
    fail(Errc::config_error, "max_complexity outside [0,1]");
  }
}

void SimConfig::validate() const {
  double sum = 0.0;
  for (const auto& [_, w] : weights) {
    if (w < 0.0) fail(Errc::config_error, "weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(Errc::config_error, "weights must sum to 1");
  if (panel_k < 3 || panel_k % 2 == 0) {
    fail(Errc::config_error, "panel_k must be odd and >= 3");
  }
  if (pass_threshold < 0.0 || pass_threshold > 1.0) {
    fail(Errc::config_error, "pass_threshold outside [0,1]");
  }
  if (bid_window < 1) fail(Errc::config_error, "bid_window must be >= 1");
  if (!mechanism_override.empty() && mechanism_override != "direct" &&
      mechanism_override != "proof" && mechanism_override != "third_party" &&
      mechanism_override != "consensus") {
    fail(Errc::config_error, "unknown mechanism_override");
  }
}

void Scenario::validate() const {
  if (horizon < 1) fail(Errc::config_error, "horizon must be >= 1");
  if (agents.empty()) fail(Errc::config_error, "scenario needs agents");
  std::set<std::string> names;
  bool any_delegator = false;
  for (const AgentSpec& a : agents) {
    if (!names.insert(a.name).second) {
      fail(Errc::config_error, "duplicate agent name: " + a.name);
    }
    if (a.initial_balance < 0) {
      fail(Errc::config_error, "negative initial balance for " + a.name);
    }
    a.policy.validate();
    any_delegator = any_delegator || a.delegator;
  }
  if (!any_delegator) fail(Errc::config_error, "scenario needs a delegator");
  config.validate();
  for (const Trigger& t : environment_feed) t.validate();
}

Scenario inject(Scenario scenario, const AdversaryProfile& adversary,
                std::size_t index) {
  if (index >= scenario.agents.size()) {
    fail(Errc::not_found, "agent index out of range");
  }
  adversary.validate();
  scenario.agents[index].policy = adversary;
  return scenario;
}

// --------------------------------------------------------------------------
// JSON
// --------------------------------------------------------------------------

void to_json(nlohmann::json& j, const AdversaryProfile& p) {
  j = nlohmann::json{{"kind", policy_kind_name(p.kind)}};
  switch (p.kind) {
    case PolicyKind::data_poisoner: j["corruption"] = p.corruption; break;
    case PolicyKind::resource_exhauster:
      j["overspend_factor"] = p.overspend_factor;
      break;
    case PolicyKind::unresponsive: j["after_tick"] = p.after_tick; break;
    case PolicyKind::reputation_saboteur:
      j["false_failure_rate"] = p.false_failure_rate;
      break;
    case PolicyKind::sybil_operator: j["identities"] = p.identities; break;
    case PolicyKind::colluding_ring: j["ring"] = p.ring; break;
    case PolicyKind::low_risk_gamer:
      j["max_complexity"] = p.max_complexity;
      break;
    default: break;
  }
}

void from_json(const nlohmann::json& j, AdversaryProfile& p) {
  p = AdversaryProfile{};
  auto kind = policy_kind_from_name(j.value("kind", "honest"));
  if (!kind) fail(Errc::config_error, "unknown policy kind");
  p.kind = *kind;
  p.corruption = j.value("corruption", p.kind == PolicyKind::data_poisoner ? 1.0 : 0.0);
  p.overspend_factor = j.value("overspend_factor", 2.0);
  p.after_tick = j.value("after_tick", Tick{0});
  p.false_failure_rate = j.value("false_failure_rate", 1.0);
  p.identities = j.value("identities", 3u);
  p.ring = j.value("ring", "");
  p.max_complexity = j.value("max_complexity", 0.3);
  p.validate();
}

void to_json(nlohmann::json& j, const AgentSpec& a) {
  j = nlohmann::json{{"name", a.name},
                     {"capabilities", a.capabilities},
                     {"balance", a.initial_balance},
                     {"policy", a.policy},
                     {"capacity", a.capacity},
                     {"delegator", a.delegator},
                     {"verifier", a.verifier},
                     {"certified_auditor", a.certified_auditor},
                     {"certified_monitor", a.certified_monitor},
                     {"proof_capable", a.proof_capable},
                     {"human", a.human},
                     {"subcontract", a.subcontract},
                     {"model_family", a.model_family}};
}

void from_json(const nlohmann::json& j, AgentSpec& a) {
  a = AgentSpec{};
  j.at("name").get_to(a.name);
  if (j.contains("capabilities")) {
    j.at("capabilities").get_to(a.capabilities);
  }
  a.initial_balance = j.value("balance", Amount{50 * kUnit});
  if (j.contains("policy")) j.at("policy").get_to(a.policy);
  a.capacity = j.value("capacity", 4u);
  a.delegator = j.value("delegator", false);
  a.verifier = j.value("verifier", false);
  a.certified_auditor = j.value("certified_auditor", false);
  a.certified_monitor = j.value("certified_monitor", false);
  a.proof_capable = j.value("proof_capable", false);
  a.human = j.value("human", false);
  a.subcontract = j.value("subcontract", false);
  a.model_family = j.value("model_family", "");
}

namespace {

GenProfile profile_from_json(const nlohmann::json& j, GenProfile base) {
  auto get = [&](const char* key, double& lo, double& hi) {
    if (j.contains(key)) {
      lo = j.at(key).at(0).get<double>();
      hi = j.at(key).at(1).get<double>();
    }
  };
  get("complexity", base.complexity_min, base.complexity_max);
  get("criticality", base.criticality_min, base.criticality_max);
  get("uncertainty", base.uncertainty_min, base.uncertainty_max);
  get("verifiability", base.verifiability_min, base.verifiability_max);
  get("reversibility", base.reversibility_min, base.reversibility_max);
  get("contextuality", base.contextuality_min, base.contextuality_max);
  get("subjectivity", base.subjectivity_min, base.subjectivity_max);
  if (j.contains("duration")) {
    base.duration_min = j.at("duration").at(0).get<Tick>();
    base.duration_max = j.at("duration").at(1).get<Tick>();
  }
  if (j.contains("cost")) {
    base.cost_min = j.at("cost").at(0).get<Amount>();
    base.cost_max = j.at("cost").at(1).get<Amount>();
  }
  if (j.contains("capability_pool")) {
    base.capability_pool =
        j.at("capability_pool").get<std::vector<std::string>>();
  }
  return base;
}

nlohmann::json profile_to_json(const GenProfile& p) {
  return {{"complexity", {p.complexity_min, p.complexity_max}},
          {"criticality", {p.criticality_min, p.criticality_max}},
          {"uncertainty", {p.uncertainty_min, p.uncertainty_max}},
          {"verifiability", {p.verifiability_min, p.verifiability_max}},
          {"reversibility", {p.reversibility_min, p.reversibility_max}},
          {"contextuality", {p.contextuality_min, p.contextuality_max}},
          {"subjectivity", {p.subjectivity_min, p.subjectivity_max}},
          {"duration", {p.duration_min, p.duration_max}},
          {"cost", {p.cost_min, p.cost_max}},
          {"capability_pool", p.capability_pool}};
}

}  // namespace

SimConfig config_from_json(const nlohmann::json& j, SimConfig base) {
  SimConfig c = base;
  if (j.contains("decomposition")) {
    const auto& d = j.at("decomposition");
    c.decomp.tau_v = d.value("tau_v", c.decomp.tau_v);
    c.decomp.tau_s = d.value("tau_s", c.decomp.tau_s);
    c.decomp.delta_v = d.value("delta_v", c.decomp.delta_v);
    c.decomp.max_refine_depth =
        d.value("max_refine_depth", c.decomp.max_refine_depth);
    c.decomp.split_branching =
        d.value("split_branching", c.decomp.split_branching);
    c.decomp.proposal_count = d.value("k", c.decomp.proposal_count);
  }
  if (j.contains("human_policy")) {
    const auto& h = j.at("human_policy");
    c.human_policy.subjectivity_threshold =
        h.value("subjectivity_threshold", c.human_policy.subjectivity_threshold);
    c.human_policy.criticality_threshold =
        h.value("criticality_threshold", c.human_policy.criticality_threshold);
    c.human_policy.human_latency_mult =
        h.value("latency_mult", c.human_policy.human_latency_mult);
    c.human_policy.human_cost_mult =
        h.value("cost_mult", c.human_policy.human_cost_mult);
  }
  if (j.contains("floor")) {
    const auto& f = j.at("floor");
    c.floor.criticality_max = f.value("criticality_max", c.floor.criticality_max);
    c.floor.uncertainty_max = f.value("uncertainty_max", c.floor.uncertainty_max);
    c.floor.duration_max = f.value("duration_max", c.floor.duration_max);
    c.floor.overhead_ratio = f.value("overhead_ratio", c.floor.overhead_ratio);
  }
  if (j.contains("market")) {
    const auto& m = j.at("market");
    c.min_stake = m.value("min_stake", c.min_stake);
    c.bid_window = m.value("bid_window", c.bid_window);
    c.requote = m.value("requote", c.requote);
    c.overhead.rfq_fee = m.value("rfq_fee", c.overhead.rfq_fee);
    c.overhead.per_bid_eval = m.value("per_bid_eval", c.overhead.per_bid_eval);
    c.overhead.contract_cost = m.value("contract_cost", c.overhead.contract_cost);
    if (m.contains("weights")) {
      c.weights = m.at("weights").get<std::map<std::string, double>>();
    }
  }
  if (j.contains("trust")) {
    c.trust.base = j.at("trust").value("base", c.trust.base);
    c.trust.slope = j.at("trust").value("slope", c.trust.slope);
  }
  if (j.contains("reputation")) {
    const auto& r = j.at("reputation");
    c.reputation.damping = r.value("damping", c.reputation.damping);
    c.reputation.prior = r.value("prior", c.reputation.prior);
    c.reputation.complexity_weighting =
        r.value("complexity_weighting", c.reputation.complexity_weighting);
    c.reputation.completion_weight =
        r.value("completion_weight", c.reputation.completion_weight);
    c.reputation.transparency_weight =
        r.value("transparency_weight", c.reputation.transparency_weight);
    c.reputation.safety_weight =
        r.value("safety_weight", c.reputation.safety_weight);
  }
  if (j.contains("breaker")) {
    c.breaker.drop = j.at("breaker").value("drop", c.breaker.drop);
    c.breaker.window = j.at("breaker").value("window", c.breaker.window);
  }
  if (j.contains("stability")) {
    const auto& s = j.at("stability");
    c.stability.rebid_cooldown = s.value("cooldown", c.stability.rebid_cooldown);
    c.stability.redelegation_base_fee =
        s.value("base_fee", c.stability.redelegation_base_fee);
    c.stability.max_redelegations =
        s.value("max_redelegations", c.stability.max_redelegations);
  }
  if (j.contains("response")) {
    const auto& r = j.at("response");
    c.response.reversibility_min =
        r.value("reversibility_min", c.response.reversibility_min);
    c.response.criticality_max =
        r.value("criticality_max", c.response.criticality_max);
    c.response.severe_degradation =
        r.value("severe_degradation", c.response.severe_degradation);
  }
  if (j.contains("contract")) {
    const auto& k = j.at("contract");
    c.dispute_window = k.value("dispute_window", c.dispute_window);
    c.compensation_schedules =
        k.value("compensation_schedules", c.compensation_schedules);
  }
  if (j.contains("verification")) {
    const auto& v = j.at("verification");
    c.pass_threshold = v.value("pass_threshold", c.pass_threshold);
    c.panel_k = v.value("panel_k", c.panel_k);
    c.panel_pool = v.value("panel_pool", c.panel_pool);
    c.proof_fee = v.value("proof_fee", c.proof_fee);
    c.audit_fee = v.value("audit_fee", c.audit_fee);
    c.mechanism_override = v.value("mechanism_override", c.mechanism_override);
    c.spot_check_prob = v.value("spot_check_prob", c.spot_check_prob);
  }
  if (j.contains("monitoring")) {
    c.indirect_confidence =
        j.at("monitoring").value("indirect_confidence", c.indirect_confidence);
    c.detect_slo = j.at("monitoring").value("detect_slo", c.detect_slo);
  }
  if (j.contains("misc")) {
    const auto& m = j.at("misc");
    c.human_approval_latency =
        m.value("human_approval_latency", c.human_approval_latency);
    c.max_chain_depth = m.value("max_chain_depth", c.max_chain_depth);
    c.token_expiry_slack = m.value("token_expiry_slack", c.token_expiry_slack);
    c.task_interval = m.value("task_interval", c.task_interval);
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const SimConfig& c) {
  return {
      {"decomposition",
       {{"tau_v", c.decomp.tau_v},
        {"tau_s", c.decomp.tau_s},
        {"delta_v", c.decomp.delta_v},
        {"max_refine_depth", c.decomp.max_refine_depth},
        {"split_branching", c.decomp.split_branching},
        {"k", c.decomp.proposal_count}}},
      {"human_policy",
       {{"subjectivity_threshold", c.human_policy.subjectivity_threshold},
        {"criticality_threshold", c.human_policy.criticality_threshold},
        {"latency_mult", c.human_policy.human_latency_mult},
        {"cost_mult", c.human_policy.human_cost_mult}}},
      {"floor",
       {{"criticality_max", c.floor.criticality_max},
        {"uncertainty_max", c.floor.uncertainty_max},
        {"duration_max", c.floor.duration_max},
        {"overhead_ratio", c.floor.overhead_ratio}}},
      {"market",
       {{"min_stake", c.min_stake},
        {"bid_window", c.bid_window},
        {"requote", c.requote},
        {"rfq_fee", c.overhead.rfq_fee},
        {"per_bid_eval", c.overhead.per_bid_eval},
        {"contract_cost", c.overhead.contract_cost},
        {"weights", c.weights}}},
      {"trust", {{"base", c.trust.base}, {"slope", c.trust.slope}}},
      {"reputation",
       {{"damping", c.reputation.damping},
        {"prior", c.reputation.prior},
        {"complexity_weighting", c.reputation.complexity_weighting},
        {"completion_weight", c.reputation.completion_weight},
        {"transparency_weight", c.reputation.transparency_weight},
        {"safety_weight", c.reputation.safety_weight}}},
      {"breaker", {{"drop", c.breaker.drop}, {"window", c.breaker.window}}},
      {"stability",
       {{"cooldown", c.stability.rebid_cooldown},
        {"base_fee", c.stability.redelegation_base_fee},
        {"max_redelegations", c.stability.max_redelegations}}},
      {"response",
       {{"reversibility_min", c.response.reversibility_min},
        {"criticality_max", c.response.criticality_max},
        {"severe_degradation", c.response.severe_degradation}}},
      {"contract",
       {{"dispute_window", c.dispute_window},
        {"compensation_schedules", c.compensation_schedules}}},
      {"verification",
       {{"pass_threshold", c.pass_threshold},
        {"panel_k", c.panel_k},
        {"panel_pool", c.panel_pool},
        {"proof_fee", c.proof_fee},
        {"audit_fee", c.audit_fee},
        {"mechanism_override", c.mechanism_override},
        {"spot_check_prob", c.spot_check_prob}}},
      {"monitoring",
       {{"indirect_confidence", c.indirect_confidence},
        {"detect_slo", c.detect_slo}}},
      {"misc",
       {{"human_approval_latency", c.human_approval_latency},
        {"max_chain_depth", c.max_chain_depth},
        {"token_expiry_slack", c.token_expiry_slack},
        {"task_interval", c.task_interval}}}};
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  Scenario s;
  s.name = j.value("name", "scenario");
  s.seed = j.value("seed", std::uint64_t{1});
  s.horizon = j.value("horizon", Tick{1000});
  if (j.contains("agents")) {
    s.agents = j.at("agents").get<std::vector<AgentSpec>>();
  }
  if (j.contains("workload")) {
    const auto& w = j.at("workload");
    s.workload.count = w.value("count", 1u);
    s.workload.seed = w.value("seed", s.seed);
    s.workload.depth = w.value("depth", 1u);
    s.workload.branching = w.value("branching", 2u);
    if (w.contains("profile")) {
      s.workload.profile = profile_from_json(w.at("profile"), GenProfile{});
    }
    if (w.contains("tasks")) {
      s.workload.explicit_tasks = w.at("tasks").get<std::vector<TaskNode>>();
    }
  }
  if (j.contains("config")) s.config = config_from_json(j.at("config"));
  if (j.contains("environment_feed")) {
    s.environment_feed = j.at("environment_feed").get<std::vector<Trigger>>();
  }
  s.validate();
  return s;
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["seed"] = seed;
  j["horizon"] = horizon;
  j["agents"] = agents;
  j["workload"] = {{"count", workload.count},
                   {"seed", workload.seed},
                   {"depth", workload.depth},
                   {"branching", workload.branching},
                   {"profile", profile_to_json(workload.profile)}};
  if (!workload.explicit_tasks.empty()) {
    j["workload"]["tasks"] = workload.explicit_tasks;
  }
  j["config"] = config_to_json(config);
  j["environment_feed"] = environment_feed;
  return j;
}

}  // namespace delsim
