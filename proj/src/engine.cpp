#include "delsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <queue>

#include "delsim/contract.hpp"
#include "delsim/coordination.hpp"
#include "delsim/rng.hpp"

namespace delsim {

nlohmann::json RunResult::result_json() const {
  return {{"event_log_digest", event_log_digest},
          {"metrics", metrics.to_json()}};
}

namespace {

struct AgentRt {
  AgentSpec spec;
  AgentId id;
  std::string account;              // operator account for sybil identities
  std::string operator_name;        // set for sybil identities
  std::vector<std::string> sybils;  // identity names, for operators
  std::uint32_t busy = 0;
  bool revoked = false;
  double cost_factor = 1.0;
  double speed_factor = 1.0;
};

struct LeafRt {
  std::string leaf_id;
  std::string root_id;
  LeafAssignmentPlan plan;
  TaskSpecification spec;
  std::string delegator;  // agent name

  std::set<std::string> deps;
  std::vector<std::string> dependents;

  std::string rfq_id;
  std::optional<std::string> backup_agent;  // agent name
  Amount backup_price = 0;

  std::string contract_id;
  std::string executor;  // agent name
  CapabilityToken token;
  bool has_token = false;

  Tick exec_start = 0;
  Tick exec_duration = 1;
  double resumed_fraction = 0.0;
  double budget_units = 100.0;
  std::uint32_t param_adjusts = 0;
  std::optional<StateSnapshot> last_snapshot;

  std::vector<Tick> redelegations;
  std::uint32_t scheduled_events = 0;
  std::uint32_t delivered_events = 0;
  std::uint32_t token_checks = 0;
  std::uint32_t token_denies = 0;
  bool overspent = false;

  std::optional<Artifact> artifact;
  std::vector<AttestationReport> attestations;
  bool backdoor_flag = false;

  bool started = false;
  bool done = false;
  bool ok = false;
  bool response_inflight = false;
  std::uint64_t attempt = 0;  // invalidates stale sweeps/completions

  // Sub-delegation bookkeeping.
  bool is_sub = false;
  std::string parent_leaf;  // for subs
  std::string sub_leaf;     // for parents with an active sub
};

struct RootRt {
  TaskNode tree;
  Tick arrival = 0;
  std::string delegator;
  std::vector<DecompositionProposal> alternatives;
  std::set<std::string> leaves_left;
  bool failed = false;
  bool counted = false;
};

struct Scheduled {
  Tick tick;
  std::uint64_t order;
  std::function<void()> fn;
};

struct ScheduledAfter {
  bool operator()(const Scheduled& a, const Scheduled& b) const {
    if (a.tick != b.tick) return a.tick > b.tick;
    return a.order > b.order;
  }
};

class Engine {
 public:
  explicit Engine(Scenario scenario)
      : scenario_(std::move(scenario)),
        cfg_(scenario_.config),
        reg_(scenario_.seed),
        authority_(DetRng::derive(scenario_.seed, "authority")),
        repledger_(cfg_.reputation, &reg_),
        rng_(DetRng::derive(scenario_.seed, "engine")) {}

  RunResult run();

 private:
  // -- setup ---------------------------------------------------------------
  void register_agents();
  void build_registry();
  void schedule_workload();

  // -- event plumbing ------------------------------------------------------
  void schedule(Tick tick, std::function<void()> fn) {
    queue_.push({std::max(tick, now_), order_++, std::move(fn)});
  }
  void log(Tick tick, const std::string& type, nlohmann::json fields);
  void flush_ledger();

  // -- lifecycle -----------------------------------------------------------
  void start_root(const std::string& root_id);
  void finalize_leaves(RootRt& root, const DecompositionProposal& proposal);
  void maybe_start_leaf(const std::string& leaf_id);
  void start_leaf(const std::string& leaf_id);
  void close_rfq(const std::string& leaf_id, std::uint64_t attempt);
  void award_contract(const std::string& leaf_id, const Bid& winner_bid,
                      const std::vector<ScoredBid>& all_bids);
  void activate_contract(const std::string& leaf_id);
  void begin_execution(const std::string& leaf_id);
  void emit_progress(const std::string& leaf_id, std::uint64_t attempt,
                     std::uint32_t step, std::uint32_t steps);
  void complete_execution(const std::string& leaf_id, std::uint64_t attempt);
  void run_verification(const std::string& leaf_id);
  Verdict panel_verdict(LeafRt& leaf, const TaskNode& task,
                        const Artifact& artifact);
  void settle_with_verdict(const std::string& leaf_id, const Verdict& verdict);
  void optimistic_settle(const std::string& leaf_id, std::uint64_t attempt);
  void post_settlement(const std::string& leaf_id, bool pass, double quality,
                       const std::string& mechanism);
  void finish_leaf(const std::string& leaf_id, bool ok);
  void fail_dependents(const std::string& leaf_id);
  void check_root_done(const std::string& root_id);

  // -- coordination ----------------------------------------------------------
  void schedule_sweep(const std::string& leaf_id, std::uint64_t attempt);
  void sweep(const std::string& leaf_id, std::uint64_t attempt);
  void handle_trigger(const std::string& leaf_id, const Trigger& trigger);
  void redelegate(const std::string& leaf_id, bool use_backup,
                  bool contract_active);
  void terminate_leaf(const std::string& leaf_id, bool escalated);
  void trip_breaker(const std::string& agent_name);

  // -- helpers ---------------------------------------------------------------
  AgentRt& agent(const std::string& name);
  std::vector<std::string> bidder_names() const;
  double rep_composite(const std::string& agent_name);
  void record_reputation(const std::string& leaf_id, bool pass, double quality,
                         Tick deadline_tick);
  void verify_token_for(LeafRt& leaf, const std::string& holder_name,
                        Operation op, Amount spend);
  void sub_delegate(const std::string& leaf_id);
  Amount charge_overhead(const std::string& leaf_id, std::size_t bid_count);
  void wind_down();

  Scenario scenario_;
  SimConfig cfg_;
  KeyRegistry reg_;
  TokenAuthority authority_;
  Bank bank_;
  MarketBook market_;
  ContractStore contracts_;
  ReputationLedger repledger_;
  StatusBoard status_;
  CapabilityRegistry registry_;
  DetRng rng_;

  std::priority_queue<Scheduled, std::vector<Scheduled>, ScheduledAfter> queue_;
  std::uint64_t order_ = 0;
  std::uint64_t seq_ = 0;
  Tick now_ = 0;
  Amount initial_total_ = 0;
  std::size_t ledger_logged_ = 0;

  std::map<std::string, AgentRt> agents_;          // by name
  std::map<std::string, std::string> name_by_did_;
  std::map<std::string, RootRt> roots_;
  std::map<std::string, LeafRt> leaves_;
  std::map<std::string, std::string> delegator_root_key_;
  std::map<std::string, std::deque<std::string>> pending_;  // per delegator
  std::map<std::string, std::size_t> rep_entry_of_contract_;
  std::vector<std::string> log_lines_;
  std::vector<nlohmann::json> log_events_;
};

// ---------------------------------------------------------------------------
// setup
// ---------------------------------------------------------------------------

std::string did_for(const std::string& name) {
  CanonicalWriter w;
  w.str(name);
  return "did:sim:" + to_hex(as_span(w.digest())).substr(0, 12);
}

void Engine::register_agents() {
  for (const AgentSpec& spec : scenario_.agents) {
    AgentRt rt;
    rt.spec = spec;
    rt.id = reg_.register_agent(did_for(spec.name));
    rt.account = rt.id.id;
    // Stable per-agent market posture.
    const std::uint64_t h = DetRng::derive(scenario_.seed, "posture:" + spec.name);
    rt.cost_factor = 0.85 + static_cast<double>(h % 1000) / 1000.0 * 0.3;
    rt.speed_factor = 1.0;
    name_by_did_[rt.id.id] = spec.name;
    bank_.open_account(rt.account, spec.initial_balance);
    log(0, "AGENT_REGISTERED",
        {{"agent", spec.name},
         {"id", rt.id.id},
         {"account", rt.account},
         {"balance", spec.initial_balance},
         {"policy", policy_kind_name(spec.policy.kind)},
         {"delegator", spec.delegator}});
    if (spec.delegator) {
      delegator_root_key_[spec.name] = authority_.register_root(spec.name);
      pending_[spec.name];
    }
    agents_.emplace(spec.name, std::move(rt));

    // Sybil operators field extra identities sharing the operator's budget.
    if (spec.policy.kind == PolicyKind::sybil_operator) {
      AgentRt& op = agents_.at(spec.name);
      for (std::uint32_t i = 0; i < spec.policy.identities; ++i) {
        AgentRt clone;
        clone.spec = spec;
        clone.spec.name = spec.name + "#" + std::to_string(i);
        clone.spec.delegator = false;
        clone.id = reg_.register_agent(did_for(clone.spec.name));
        clone.account = op.account;
        clone.operator_name = spec.name;
        const std::uint64_t ch =
            DetRng::derive(scenario_.seed, "posture:" + clone.spec.name);
        clone.cost_factor = 1.2 + static_cast<double>(ch % 1000) / 1000.0 * 0.3;
        name_by_did_[clone.id.id] = clone.spec.name;
        bank_.set_alias(clone.id.id, op.account);
        op.sybils.push_back(clone.spec.name);
        log(0, "SYBIL_IDENTITY",
            {{"operator", spec.name}, {"identity", clone.spec.name},
             {"id", clone.id.id}});
        agents_.emplace(clone.spec.name, std::move(clone));
      }
    }
  }
  bank_.seal();
  initial_total_ = bank_.total();
}

void Engine::build_registry() {
  for (const auto& [name, rt] : agents_) {
    if (rt.spec.delegator) continue;
    CapabilityEntry e;
    e.agent_id = rt.id.id;
    e.capabilities = rt.spec.capabilities;
    e.reliability = 0.9;
    e.cost_factor = rt.cost_factor;
    e.speed_factor = rt.speed_factor;
    e.verifier = rt.spec.verifier;
    e.certified_auditor = rt.spec.certified_auditor;
    e.proof_capable = rt.spec.proof_capable;
    e.human = rt.spec.human;
    registry_.add(std::move(e));
  }
}

void Engine::schedule_workload() {
  std::vector<std::string> delegators;
  for (const auto& [name, rt] : agents_) {
    if (rt.spec.delegator) delegators.push_back(name);
  }
  std::vector<TaskNode> tasks;
  if (!scenario_.workload.explicit_tasks.empty()) {
    tasks = scenario_.workload.explicit_tasks;
  } else {
    for (std::uint32_t i = 0; i < scenario_.workload.count; ++i) {
      tasks.push_back(generate_task(scenario_.workload.seed + i,
                                    scenario_.workload.depth,
                                    scenario_.workload.branching,
                                    scenario_.workload.profile));
    }
  }
  Tick arrival = 1;
  std::size_t d = 0;
  for (TaskNode& task : tasks) {
    if (arrival >= scenario_.horizon) break;
    RootRt root;
    root.tree = std::move(task);
    root.arrival = arrival;
    root.delegator = delegators[d % delegators.size()];
    const std::string root_id = root.tree.task_id;
    roots_.emplace(root_id, std::move(root));
    schedule(arrival, [this, root_id] { start_root(root_id); });
    arrival += cfg_.task_interval;
    ++d;
  }
  for (const Trigger& t : scenario_.environment_feed) {
    schedule(t.tick, [this, t] {
      // External triggers address a root or a leaf; fan out to active leaves.
      for (auto& [leaf_id, leaf] : leaves_) {
        if (leaf.done || leaf.is_sub) continue;
        if (leaf_id != t.task_id && leaf.root_id != t.task_id) continue;
        Trigger local = t;
        local.task_id = leaf_id;
        handle_trigger(leaf_id, local);
      }
    });
  }
}

// ---------------------------------------------------------------------------
// plumbing
// ---------------------------------------------------------------------------

void Engine::log(Tick tick, const std::string& type, nlohmann::json fields) {
  fields["tick"] = tick;
  fields["seq"] = seq_++;
  fields["type"] = type;
  log_lines_.push_back(fields.dump());
  log_events_.push_back(std::move(fields));
}

void Engine::flush_ledger() {
  const auto& entries = bank_.entries();
  for (; ledger_logged_ < entries.size(); ++ledger_logged_) {
    const LedgerEntry& e = entries[ledger_logged_];
    log(e.tick, "LEDGER",
        {{"from_account", e.from_account},
         {"to_account", e.to_account},
         {"amount", e.amount},
         {"reason", ledger_reason_name(e.reason)}});
  }
}

AgentRt& Engine::agent(const std::string& name) {
  auto it = agents_.find(name);
  if (it == agents_.end()) fail(Errc::not_found, "unknown agent: " + name);
  return it->second;
}

std::vector<std::string> Engine::bidder_names() const {
  std::vector<std::string> out;
  for (const auto& [name, rt] : agents_) {
    if (!rt.spec.delegator && !rt.spec.human) out.push_back(name);
  }
  return out;
}

double Engine::rep_composite(const std::string& agent_name) {
  return repledger_.score(agent(agent_name).id.id, now_).composite;
}

// ---------------------------------------------------------------------------
// root pipeline
// ---------------------------------------------------------------------------

void Engine::start_root(const std::string& root_id) {
  RootRt& root = roots_.at(root_id);
  log(now_, "ROOT_ARRIVED", {{"task_id", root_id}, {"delegator", root.delegator}});

  const std::size_t expected_bids = bidder_names().size();
  const Amount overhead = delegation_overhead(
      cfg_.overhead, expected_bids, true, PolicyMode::standard);
  if (complexity_floor(root.tree, overhead, cfg_.floor) ==
      FloorDecision::ExecuteDirectly) {
    // Below the complexity floor: the delegator runs the task itself.
    log(now_, "DIRECT_EXECUTION", {{"task_id", root_id}});
    log(now_, "WORK_UNIT", {{"task_id", root_id}, {"kind", "direct"}});
    const Tick dur = root.tree.characteristics.duration_est;
    schedule(now_ + dur, [this, root_id] {
      RootRt& r = roots_.at(root_id);
      AgentRt& d = agent(r.delegator);
      Artifact a = make_artifact(r.tree, d.id, 0.0);
      const double q = oracle_evaluate(r.tree, a);
      log(now_, "WORK_DONE",
          {{"task_id", root_id}, {"ok", q >= cfg_.pass_threshold}});
      log(now_, "ROOT_COMPLETED", {{"task_id", root_id}});
    });
    return;
  }

  std::vector<DecompositionProposal> proposals;
  try {
    proposals = propose(root.tree, registry_, cfg_.decomp.proposal_count,
                        cfg_.decomp);
  } catch (const SimError& e) {
    if (e.code() != Errc::undecomposable_task) throw;
    log(now_, "ROOT_FAILED", {{"task_id", root_id}, {"reason", "undecomposable"}});
    root.failed = true;
    return;
  }
  for (auto& p : proposals) {
    p = mark_human_nodes(std::move(p), cfg_.human_policy, registry_);
  }
  log(now_, "DECOMPOSED",
      {{"task_id", root_id},
       {"proposals", proposals.size()},
       {"chosen", proposals.front().proposal_id},
       {"leaves", proposals.front().leaves.size()}});
  // Alternative proposals stay in-context for adaptive re-adjustment.
  root.alternatives.assign(proposals.begin() + 1, proposals.end());
  finalize_leaves(root, proposals.front());
}

void Engine::finalize_leaves(RootRt& root, const DecompositionProposal& proposal) {
  for (const LeafAssignmentPlan& plan : proposal.leaves) {
    LeafRt leaf;
    leaf.leaf_id = plan.node.task_id;
    leaf.root_id = root.tree.task_id;
    leaf.plan = plan;
    leaf.delegator = root.delegator;
    const Amount budget_share =
        plan.node.characteristics.cost_est * 5 / 2;  // bid headroom
    leaf.spec = finalize(plan, budget_share, cfg_.decomp);
    status_.register_task(leaf.leaf_id);
    root.leaves_left.insert(leaf.leaf_id);
    log(now_, "SPEC_FINALIZED",
        {{"task_id", leaf.leaf_id},
         {"root", leaf.root_id},
         {"verifiability", plan.node.characteristics.verifiability},
         {"human_required", plan.node.human_required},
         {"mode", policy_mode_name(leaf.spec.verification_policy.mode)},
         {"spend_cap", leaf.spec.spend_cap}});
    log(now_, "WORK_UNIT", {{"task_id", leaf.leaf_id}, {"kind", "leaf"}});
    leaves_.emplace(leaf.leaf_id, std::move(leaf));
  }
  for (const auto& [from, to] : proposal.dag) {
    if (leaves_.count(from) > 0 && leaves_.count(to) > 0) {
      leaves_.at(to).deps.insert(from);
      leaves_.at(from).dependents.push_back(to);
    }
  }
  for (const LeafAssignmentPlan& plan : proposal.leaves) {
    maybe_start_leaf(plan.node.task_id);
  }
}

void Engine::maybe_start_leaf(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.started || leaf.done || !leaf.deps.empty()) return;
  AgentRt& delegator = agent(leaf.delegator);
  if (delegator.busy >= delegator.spec.capacity) {
    pending_[leaf.delegator].push_back(leaf_id);  // span-of-control limit
    return;
  }
  leaf.started = true;
  ++delegator.busy;
  schedule(now_, [this, leaf_id] { start_leaf(leaf_id); });
}

void Engine::start_leaf(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  TaskRFQ& rfq = market_.broadcast_rfq(leaf.spec, now_, cfg_.bid_window,
                                       cfg_.min_stake, cfg_.weights);
  leaf.rfq_id = rfq.rfq_id;
  log(now_, "RFQ_BROADCAST",
      {{"rfq_id", rfq.rfq_id},
       {"task_id", leaf_id},
       {"min_stake", cfg_.min_stake},
       {"deadline", rfq.deadline_for_bids}});

  // Interested agents respond with signed bids immediately.
  for (const std::string& name : bidder_names()) {
    AgentRt& rt = agent(name);
    const AdversaryProfile& pol = rt.spec.policy;
    if (leaf.spec.human_required && !rt.spec.human) continue;
    if (!leaf.spec.human_required && rt.spec.human) continue;
    bool capable = std::all_of(
        leaf.plan.required_capabilities.begin(),
        leaf.plan.required_capabilities.end(),
        [&](const std::string& c) { return rt.spec.capabilities.count(c) > 0; });
    if (!capable) continue;
    if (rt.revoked) continue;
    if (!rt.operator_name.empty() && agent(rt.operator_name).revoked) continue;
    if (rt.busy >= rt.spec.capacity) continue;
    if (pol.kind == PolicyKind::low_risk_gamer &&
        leaf.plan.node.characteristics.complexity > pol.max_complexity) {
      continue;  // gaming: only accept simple, low-risk tasks
    }
    const Amount cost = static_cast<Amount>(
        std::llround(static_cast<double>(leaf.plan.node.characteristics.cost_est) *
                     rt.cost_factor));
    const Tick duration = std::max<Tick>(
        1, static_cast<Tick>(std::llround(
               static_cast<double>(leaf.plan.node.characteristics.duration_est) *
               rt.speed_factor)));
    const PrivacyGuarantee privacy = rt.spec.proof_capable
                                         ? PrivacyGuarantee::crypto_proof
                                         : PrivacyGuarantee::none;
    Bid bid = Bid::make(reg_, rt.id, cost, duration, privacy, cfg_.min_stake,
                        rfq.deadline_for_bids + 10);
    SubmitResult res = market_.submit_bid(rfq.rfq_id, bid, reg_, bank_, now_);
    if (res.accepted) {
      log(now_, "BID_SUBMITTED",
          {{"rfq_id", rfq.rfq_id},
           {"agent", name},
           {"estimated_cost", cost},
           {"reputation_bond", bid.reputation_bond}});
    } else {
      log(now_, "BID_REJECTED",
          {{"rfq_id", rfq.rfq_id},
           {"agent", name},
           {"reason", bid_reject_reason_name(*res.reason)}});
    }
  }
  flush_ledger();
  const std::uint64_t attempt = leaf.attempt;
  schedule(rfq.deadline_for_bids,
           [this, leaf_id, attempt] { close_rfq(leaf_id, attempt); });
}

Amount Engine::charge_overhead(const std::string& leaf_id,
                               std::size_t bid_count) {
  LeafRt& leaf = leaves_.at(leaf_id);
  const Amount overhead = delegation_overhead(
      cfg_.overhead, bid_count, true, leaf.spec.verification_policy.mode);
  AgentRt& delegator = agent(leaf.delegator);
  bank_.transfer(delegator.account, "sink:market", overhead, LedgerReason::fee,
                 now_);
  return overhead;
}

void Engine::close_rfq(const std::string& leaf_id, std::uint64_t attempt) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.attempt != attempt || leaf.done) return;

  std::vector<ScoredBid> scored;
  for (const Bid& bid : market_.bids(leaf.rfq_id)) {
    if (bid.estimated_cost > leaf.spec.spend_cap) continue;  // over budget
    ScoredBid sb;
    sb.bid = bid;
    sb.reputation = repledger_.score(bid.agent_id, now_).composite;
    sb.objectives = objectives_for(bid, sb.reputation);
    scored.push_back(std::move(sb));
  }
  std::vector<ScoredBid> front = pareto_filter(scored);
  const double criticality = leaf.plan.node.characteristics.criticality;
  TrustModel trust = cfg_.trust;
  SelectionOutcome outcome = select(
      front, cfg_.weights,
      [&](double c) { return trust.threshold(c); }, criticality);

  if (!outcome.winner) {
    market_.close_rfq(leaf.rfq_id, bank_, now_);
    flush_ledger();
    log(now_, "RFQ_NOMATCH", {{"rfq_id", leaf.rfq_id}, {"task_id", leaf_id}});
    finish_leaf(leaf_id, false);
    return;
  }

  const Bid& winner = outcome.winner->bid;
  // Second-best survivor is retained as the backup clause.
  leaf.backup_agent.reset();
  for (const ScoredBid& sb : front) {
    if (sb.bid.agent_id == winner.agent_id) continue;
    if (sb.reputation < trust.threshold(criticality)) continue;
    leaf.backup_agent = name_by_did_.at(sb.bid.agent_id);
    leaf.backup_price = sb.bid.estimated_cost;
    break;
  }
  market_.resolve_rfq(leaf.rfq_id, winner.agent_id, bank_, now_);
  charge_overhead(leaf_id, scored.size());
  flush_ledger();
  log(now_, "RFQ_RESOLVED",
      {{"rfq_id", leaf.rfq_id},
       {"task_id", leaf_id},
       {"winner", name_by_did_.at(winner.agent_id)},
       {"price", winner.estimated_cost},
       {"bids", scored.size()}});
  award_contract(leaf_id, winner, front);
}

void Engine::award_contract(const std::string& leaf_id, const Bid& winner_bid,
                            const std::vector<ScoredBid>& all_bids) {
  (void)all_bids;
  LeafRt& leaf = leaves_.at(leaf_id);
  const std::string winner_name = name_by_did_.at(winner_bid.agent_id);
  AgentRt& winner = agent(winner_name);
  AgentRt& delegator = agent(leaf.delegator);

  MonitoringPlan plan;
  plan.cadence = leaf.spec.reporting_cadence;
  plan.granularity = leaf.spec.reporting_granularity;
  plan.target = leaf.spec.verification_policy.mode == PolicyMode::strict
                    ? MonitorTarget::process
                    : MonitorTarget::outcome;
  plan.privacy = winner_bid.privacy_guarantee == PrivacyGuarantee::crypto_proof
                     ? PrivacyMode::cryptographic
                     : PrivacyMode::full;
  plan.topology = winner.spec.subcontract ? Topology::transitive
                                          : Topology::direct;

  // Graduated authority from the winner's reputation and the task stakes.
  const ReputationScore score = repledger_.score(winner.id.id, now_);
  const AuthorityGrant grant = graduated_authority(
      score, leaf.plan.node.characteristics.criticality, cfg_.grants);
  if (static_cast<std::uint8_t>(grant.monitoring_floor) >
      static_cast<std::uint8_t>(plan.granularity)) {
    plan.granularity = grant.monitoring_floor;
  }

  std::optional<AgentId> backup;
  if (leaf.backup_agent) backup = agent(*leaf.backup_agent).id;
  DelegationContract& contract = contracts_.draft(
      winner_bid, delegator.id, winner.id, leaf.spec, plan, cfg_.dispute_window,
      backup, cfg_.compensation_schedules);
  leaf.contract_id = contract.contract_id;
  leaf.executor = winner_name;
  log(now_, "CONTRACT_DRAFTED",
      {{"contract_id", contract.contract_id},
       {"task_id", leaf_id},
       {"delegator", leaf.delegator},
       {"delegatee", winner_name},
       {"escrow", contract.escrow_amount},
       {"stake", contract.delegatee_stake},
       {"backup", leaf.backup_agent ? *leaf.backup_agent : ""}});

  try {
    contracts_.fund(contract.contract_id, bank_, now_, /*stake_from_pool=*/true);
  } catch (const SimError& e) {
    if (e.code() != Errc::funding_failed && e.code() != Errc::insufficient_funds) {
      throw;
    }
    flush_ledger();
    log(now_, "FUNDING_FAILED",
        {{"contract_id", contract.contract_id}, {"task_id", leaf_id}});
    market_.refund_bond(leaf.rfq_id, winner_bid.agent_id, bank_, now_);
    flush_ledger();
    finish_leaf(leaf_id, false);
    return;
  }
  flush_ledger();
  log(now_, "CONTRACT_STATE",
      {{"contract_id", contract.contract_id}, {"state", "Funded"}});

  ++winner.busy;
  const Tick delay =
      grant.human_approval_required ? cfg_.human_approval_latency : 0;
  if (delay > 0) {
    log(now_, "HUMAN_APPROVAL",
        {{"contract_id", contract.contract_id}, {"latency", delay}});
  }
  schedule(now_ + delay, [this, leaf_id] { activate_contract(leaf_id); });

  // Mint the delegation capability token for this contract: scoped to the
  // task resources, expiring with the contract, spend-capped by the grant.
  const std::string& root_key = delegator_root_key_.at(leaf.delegator);
  std::vector<Caveat> caveats;
  caveats.push_back(Caveat::scope(leaf.spec.resource_scope));
  caveats.push_back(Caveat::ops({Operation::READ, Operation::WRITE}));
  caveats.push_back(Caveat::expiry(
      now_ + delay +
      static_cast<Tick>(std::llround(
          static_cast<double>(winner_bid.estimated_duration) *
          cfg_.token_expiry_slack)) +
      cfg_.dispute_window));
  caveats.push_back(Caveat::max_depth(cfg_.max_chain_depth));
  caveats.push_back(Caveat::spend_cap(static_cast<std::uint64_t>(
      std::llround(static_cast<double>(leaf.spec.spend_cap) *
                   grant.spend_cap_multiplier))));
  leaf.token = authority_.mint(root_key, delegator.id, caveats);
  authority_.record_delegation(leaf.token.token_id, winner.id);
  leaf.has_token = true;
  log(now_, "TOKEN_MINTED",
      {{"token_id", leaf.token.token_id},
       {"contract_id", contract.contract_id},
       {"holder", winner_name},
       {"chain", authority_.chain_of(leaf.token.token_id)},
       {"caveats", leaf.token.caveats.size()}});
}

void Engine::activate_contract(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.done) return;
  contracts_.activate(leaf.contract_id);
  log(now_, "CONTRACT_STATE",
      {{"contract_id", leaf.contract_id}, {"state", "Active"}});
  begin_execution(leaf_id);
}

// ---------------------------------------------------------------------------
// execution
// ---------------------------------------------------------------------------

void Engine::verify_token_for(LeafRt& leaf, const std::string& holder_name,
                              Operation op, Amount spend) {
  if (!leaf.has_token) return;
  AgentRt& holder = agent(holder_name);
  RequestContext req;
  req.resource = *leaf.spec.resource_scope.begin();
  req.operation = op;
  req.now = now_;
  const auto& chain = authority_.chain_of(leaf.token.token_id);
  req.depth = chain.empty() ? 0 : chain.size() - 1;
  req.spend = static_cast<std::uint64_t>(std::max<Amount>(0, spend));
  const VerifyResult res = authority_.verify(leaf.token, req);
  ++leaf.token_checks;
  if (!res.allowed) ++leaf.token_denies;
  std::vector<std::string> chain_names;
  for (const std::string& did : chain) {
    auto it = name_by_did_.find(did);
    chain_names.push_back(it == name_by_did_.end() ? did : it->second);
  }
  log(now_, "TOKEN_VERIFY",
      {{"token_id", leaf.token.token_id},
       {"holder", holder_name},
       {"allowed", res.allowed},
       {"reason", res.allowed ? "" : deny_reason_name(*res.reason)},
       {"chain", chain_names}});
  (void)holder;
}

void Engine::begin_execution(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  AgentRt& executor = agent(leaf.executor);
  const DelegationContract& contract = contracts_.get(leaf.contract_id);

  leaf.exec_start = now_;
  const double remaining = 1.0 - leaf.resumed_fraction;
  leaf.exec_duration = std::max<Tick>(
      1, static_cast<Tick>(std::llround(
             static_cast<double>(leaf.plan.node.characteristics.duration_est) *
             executor.speed_factor * remaining)));
  leaf.budget_units = 100.0;
  leaf.scheduled_events = 0;
  leaf.delivered_events = 0;
  leaf.token_checks = 0;
  leaf.token_denies = 0;
  leaf.overspent = false;

  const std::uint64_t attempt = leaf.attempt;

  ProgressEvent started = ProgressEvent::make(
      reg_, now_, leaf_id, executor.id, EventKind::TASK_STARTED,
      Granularity::L0, {{"contract", contract.contract_id}});
  status_.record(started);
  ++leaf.scheduled_events;
  ++leaf.delivered_events;
  log(now_, "PROGRESS", started);

  // Sub-delegation: the executor carves out the work for a partner and
  // monitors it, attesting transitively.
  if (executor.spec.subcontract && !leaf.is_sub) {
    sub_delegate(leaf_id);
    if (!leaf.sub_leaf.empty()) {
      schedule_sweep(leaf_id, attempt);
      return;  // completion follows the sub-task
    }
  }

  const Tick cadence = contract.monitoring_plan.cadence;
  const std::uint32_t steps = static_cast<std::uint32_t>(
      leaf.exec_duration / std::max<Tick>(1, cadence));
  for (std::uint32_t m = 1; m <= steps; ++m) {
    const Tick at = leaf.exec_start + m * cadence;
    if (at >= leaf.exec_start + leaf.exec_duration) break;
    ++leaf.scheduled_events;
    schedule(at, [this, leaf_id, attempt, m, steps] {
      emit_progress(leaf_id, attempt, m, steps);
    });
  }
  schedule(leaf.exec_start + leaf.exec_duration, [this, leaf_id, attempt] {
    complete_execution(leaf_id, attempt);
  });
  schedule_sweep(leaf_id, attempt);
}

void Engine::emit_progress(const std::string& leaf_id, std::uint64_t attempt,
                           std::uint32_t step, std::uint32_t steps) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.attempt != attempt || leaf.done) return;
  AgentRt& executor = agent(leaf.executor);
  const AdversaryProfile& pol = executor.spec.policy;

  if (pol.kind == PolicyKind::unresponsive && now_ >= pol.after_tick) {
    return;  // goes dark: scheduled report never arrives
  }

  const double fraction =
      leaf.resumed_fraction +
      (1.0 - leaf.resumed_fraction) * static_cast<double>(step) /
          static_cast<double>(std::max(1u, steps + 1));
  double spend_units = leaf.budget_units * fraction;
  if (pol.kind == PolicyKind::resource_exhauster) {
    spend_units *= pol.overspend_factor;
  }

  const DelegationContract& contract = contracts_.get(leaf.contract_id);
  const Amount money_spend = static_cast<Amount>(
      std::llround(static_cast<double>(contract.escrow_amount) * fraction));
  verify_token_for(leaf, leaf.executor, Operation::WRITE, money_spend);

  ProgressEvent ev = ProgressEvent::make(
      reg_, now_, leaf_id, executor.id, EventKind::CHECKPOINT_REACHED,
      Granularity::L1,
      {{"fraction", fraction}, {"spend", spend_units}, {"step", step}});
  status_.record(ev);
  ++leaf.delivered_events;
  log(now_, "PROGRESS", ev);

  if (spend_units > leaf.budget_units) {
    leaf.overspent = true;
    ProgressEvent warn = ProgressEvent::make(
        reg_, now_, leaf_id, executor.id, EventKind::RESOURCE_WARNING,
        Granularity::L0, {{"spend", spend_units}, {"budget", leaf.budget_units}});
    status_.record(warn);
    log(now_, "PROGRESS", warn);
  }

  leaf.last_snapshot =
      checkpoint(reg_, leaf.plan.node, executor.id, fraction, now_);
  log(now_, "SNAPSHOT", {{"task_id", leaf_id}, {"fraction", fraction}});
}

void Engine::sub_delegate(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  AgentRt& contractor = agent(leaf.executor);

  // Pick the lexicographically first capable idle partner.
  std::string partner_name;
  for (const std::string& name : bidder_names()) {
    if (name == leaf.executor || name == leaf.delegator) continue;
    AgentRt& rt = agent(name);
    if (rt.spec.subcontract || rt.spec.human || rt.revoked) continue;
    if (rt.busy >= rt.spec.capacity) continue;
    bool capable = std::all_of(
        leaf.plan.required_capabilities.begin(),
        leaf.plan.required_capabilities.end(),
        [&](const std::string& c) { return rt.spec.capabilities.count(c) > 0; });
    if (!capable) continue;
    partner_name = name;
    break;
  }
  if (partner_name.empty()) return;
  AgentRt& partner = agent(partner_name);

  const DelegationContract& main = contracts_.get(leaf.contract_id);
  const Amount sub_price = main.escrow_amount * 3 / 5;
  if (bank_.balance(contractor.account) < sub_price ||
      bank_.balance(partner.account) < cfg_.min_stake) {
    return;
  }

  // The delegated slice is a child task derived from the leaf.
  TaskNode sub_node = leaf.plan.node;
  sub_node.children.clear();
  sub_node.task_id = leaf.leaf_id + ".d0";
  sub_node.ground_truth = DetRng::derive(leaf.plan.node.ground_truth,
                                         sub_node.task_id);
  sub_node.characteristics.cost_est = sub_price;

  LeafRt sub;
  sub.leaf_id = sub_node.task_id;
  sub.root_id = leaf.root_id;
  sub.plan.node = sub_node;
  sub.plan.required_capabilities = leaf.plan.required_capabilities;
  sub.plan.candidate_verification_modes = {"direct"};
  sub.spec = finalize(sub.plan, sub_price * 2, cfg_.decomp);
  sub.delegator = leaf.executor;
  sub.executor = partner_name;
  sub.is_sub = true;
  sub.parent_leaf = leaf_id;
  status_.register_task(sub.leaf_id);

  Bid sub_bid = Bid::make(reg_, partner.id, sub_price,
                          leaf.plan.node.characteristics.duration_est,
                          PrivacyGuarantee::none, cfg_.min_stake, now_ + 1000);
  MonitoringPlan sub_plan;
  sub_plan.cadence = leaf.spec.reporting_cadence;
  sub_plan.granularity = Granularity::L1;
  DelegationContract& sub_contract = contracts_.draft(
      sub_bid, contractor.id, partner.id, sub.spec, sub_plan,
      cfg_.dispute_window, std::nullopt, false);
  sub.contract_id = sub_contract.contract_id;

  try {
    contracts_.fund(sub_contract.contract_id, bank_, now_, false);
  } catch (const SimError&) {
    return;  // partner or contractor cannot fund the carve-out
  }
  contracts_.activate(sub_contract.contract_id);
  flush_ledger();

  // Attenuate the leaf token for the partner and register the hop.
  leaf.token = attenuate(leaf.token, Caveat::scope({"/tasks/" + leaf.leaf_id}));
  authority_.record_delegation(leaf.token.token_id, partner.id);
  ++partner.busy;

  log(now_, "SUBDELEGATION",
      {{"contract_id", sub_contract.contract_id},
       {"parent_contract", leaf.contract_id},
       {"task_id", sub.leaf_id},
       {"from", leaf.executor},
       {"to", partner_name},
       {"price", sub_price}});

  leaf.sub_leaf = sub.leaf_id;
  const std::string sub_id = sub.leaf_id;
  leaves_.emplace(sub_id, std::move(sub));
  LeafRt& placed = leaves_.at(sub_id);
  placed.token = leaf.token;
  placed.has_token = true;
  begin_execution(sub_id);
}

void Engine::complete_execution(const std::string& leaf_id,
                                std::uint64_t attempt) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.attempt != attempt || leaf.done) return;
  AgentRt& executor = agent(leaf.executor);
  const AdversaryProfile& pol = executor.spec.policy;

  if (pol.kind == PolicyKind::unresponsive && now_ >= pol.after_tick) {
    return;  // never submits; coordination picks it up
  }

  double corruption = 0.0;
  if (pol.kind == PolicyKind::data_poisoner) corruption = pol.corruption;
  leaf.artifact = make_artifact(leaf.plan.node, executor.id, corruption);
  leaf.backdoor_flag = pol.kind == PolicyKind::backdoor_implanter;

  ProgressEvent done_ev = ProgressEvent::make(
      reg_, now_, leaf_id, executor.id, EventKind::TASK_COMPLETED,
      Granularity::L0,
      {{"artifact_digest", to_hex(as_span(leaf.artifact->content_digest))}});
  status_.record(done_ev);
  ++leaf.scheduled_events;
  ++leaf.delivered_events;
  log(now_, "PROGRESS", done_ev);

  contracts_.submit_outcome(leaf.contract_id, now_);
  log(now_, "CONTRACT_STATE",
      {{"contract_id", leaf.contract_id},
       {"state", "Submitted"},
       {"window_end", contracts_.get(leaf.contract_id).window_end}});

  run_verification(leaf_id);
}

// ---------------------------------------------------------------------------
// verification + settlement
// ---------------------------------------------------------------------------

Verdict Engine::panel_verdict(LeafRt& leaf, const TaskNode& task,
                              const Artifact& artifact) {
  std::vector<PanelVerifier> panel;
  const std::string executor_ring = agent(leaf.executor).spec.policy.ring;
  for (const auto& [name, rt] : agents_) {
    if (panel.size() >= cfg_.panel_k) break;
    if (!rt.spec.verifier || name == leaf.executor || name == leaf.delegator) {
      continue;
    }
    PanelVerifier v;
    v.agent = rt.id;
    const AdversaryProfile pol = rt.spec.policy;
    const bool colluding = pol.kind == PolicyKind::colluding_ring &&
                           !executor_ring.empty() && pol.ring == executor_ring;
    v.evaluate = [this, colluding](const TaskNode& t, const Artifact& a) {
      if (colluding) return true;  // ring covers for its member
      return oracle_evaluate(t, a) >= cfg_.pass_threshold;
    };
    panel.push_back(std::move(v));
  }
  if (panel.size() < cfg_.panel_k) {
    // Not enough standing verifiers: fall back to direct inspection.
    VerificationPolicy policy = leaf.spec.verification_policy;
    policy.pass_threshold = cfg_.pass_threshold;
    return verify_direct(task, artifact, policy);
  }
  AgentRt& delegator = agent(leaf.delegator);
  bank_.transfer(delegator.account, "pool:panel", cfg_.panel_pool,
                 LedgerReason::fee, now_);
  VerificationPolicy policy = leaf.spec.verification_policy;
  policy.pass_threshold = cfg_.pass_threshold;
  ConsensusOutcome outcome =
      schelling_consensus(reg_, task, artifact, panel, cfg_.panel_pool, policy);
  for (const PanelPayout& payout : outcome.payouts) {
    if (payout.reward > 0) {
      bank_.transfer("pool:panel", payout.agent.id, payout.reward,
                     LedgerReason::reward, now_);
    }
  }
  flush_ledger();
  log(now_, "PANEL",
      {{"task_id", leaf.leaf_id},
       {"k", panel.size()},
       {"pass", outcome.verdict.pass},
       {"pool", cfg_.panel_pool}});
  return outcome.verdict;
}

void Engine::run_verification(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  const DelegationContract& contract = contracts_.get(leaf.contract_id);
  const std::uint64_t attempt = leaf.attempt;

  if (!contract.verification_policy.escrow_trigger) {
    // Optimistic path: assumed successful unless challenged in the window.
    bool challenge = false;
    AgentRt& delegator = agent(leaf.delegator);
    if (delegator.spec.policy.kind == PolicyKind::reputation_saboteur &&
        !leaf.is_sub) {
      challenge = rng_.coin(delegator.spec.policy.false_failure_rate);
    } else if (rng_.coin(cfg_.spot_check_prob)) {
      VerificationPolicy policy = contract.verification_policy;
      policy.pass_threshold = cfg_.pass_threshold;
      Verdict spot = verify_direct(leaf.plan.node, *leaf.artifact, policy);
      challenge = !spot.pass;
      log(now_, "SPOT_CHECK",
          {{"task_id", leaf_id}, {"pass", spot.pass}, {"quality", spot.quality}});
    }
    if (challenge) {
      contracts_.challenge(leaf.contract_id, bank_, delegator.id,
                           contract.dispute_bond, now_);
      flush_ledger();
      log(now_, "CHALLENGE",
          {{"contract_id", leaf.contract_id},
           {"challenger", leaf.delegator},
           {"bond", contract.dispute_bond}});
      log(now_, "CONTRACT_STATE",
          {{"contract_id", leaf.contract_id}, {"state", "Disputed"}});
      schedule(now_ + 1, [this, leaf_id, attempt] {
        LeafRt& l = leaves_.at(leaf_id);
        if (l.attempt != attempt || l.done) return;
        contracts_.arbitrate(l.contract_id);
        log(now_, "CONTRACT_STATE",
            {{"contract_id", l.contract_id}, {"state", "Arbitrated"}});
        Verdict verdict = panel_verdict(l, l.plan.node, *l.artifact);
        verdict.mechanism = Mechanism::consensus;
        settle_with_verdict(leaf_id, verdict);
      });
      return;
    }
    schedule(contract.window_end, [this, leaf_id, attempt] {
      optimistic_settle(leaf_id, attempt);
    });
    return;
  }

  // Escrow-triggered: verify now, settle on the verdict.
  Verdict verdict;
  VerificationPolicy policy = contract.verification_policy;
  policy.pass_threshold = cfg_.pass_threshold;
  std::string mechanism = cfg_.mechanism_override;
  if (mechanism.empty()) {
    if (leaf.spec.human_required && registry_.has_human_reviewers()) {
      mechanism = "human";
    } else if (contracts_.get(leaf.contract_id).monitoring_plan.privacy ==
                   PrivacyMode::cryptographic) {
      mechanism = "proof";
    } else if (!leaf.is_sub &&
               registry_.has_certified_auditor(leaf.plan.required_capabilities) &&
               !std::all_of(leaf.plan.required_capabilities.begin(),
                            leaf.plan.required_capabilities.end(),
                            [&](const std::string& c) {
                              return agent(leaf.delegator)
                                         .spec.capabilities.count(c) > 0;
                            })) {
      mechanism = "third_party";
    } else {
      mechanism = "direct";
    }
  }

  if (mechanism == "proof") {
    AgentRt& executor = agent(leaf.executor);
    // Emulated succinct proof under the verifier-shared key.
    CanonicalWriter w;
    w.str("verify-key").u64(scenario_.seed);
    const Digest32 shared_key = w.digest();
    const Digest32 input = sha256(as_span(leaf.leaf_id));
    ProofArtifact proof = ProofArtifact::commit(
        as_span(shared_key), leaf.leaf_id, input, leaf.artifact->content_digest);
    verdict = verify_proof(proof, as_span(shared_key), input,
                           expected_digest(leaf.plan.node));
    bank_.transfer(agent(leaf.delegator).account, "sink:verification",
                   cfg_.proof_fee, LedgerReason::fee, now_);
    (void)executor;
  } else if (mechanism == "third_party") {
    std::string auditor_name;
    for (const auto& [name, rt] : agents_) {
      if (rt.spec.certified_auditor) {
        auditor_name = name;
        break;
      }
    }
    AgentRt& auditor = agent(auditor_name);
    AuditorDirectory directory;
    directory.has_capability = [this](const std::string& agent_did,
                                      const std::string&) {
      return name_by_did_.count(agent_did) > 0;
    };
    directory.is_certified = [this](const std::string& agent_did) {
      auto it = name_by_did_.find(agent_did);
      return it != name_by_did_.end() &&
             agents_.at(it->second).spec.certified_auditor;
    };
    verdict = verify_third_party(reg_, leaf.plan.node, *leaf.artifact,
                                 auditor.id, "audit", directory, policy);
    bank_.transfer(agent(leaf.delegator).account, auditor.account,
                   cfg_.audit_fee, LedgerReason::fee, now_);
  } else if (mechanism == "consensus") {
    verdict = panel_verdict(leaf, leaf.plan.node, *leaf.artifact);
  } else if (mechanism == "human") {
    // Scripted human reviewer: oracle-informed judgement.
    verdict = verify_direct(leaf.plan.node, *leaf.artifact, policy);
    verdict.mechanism = Mechanism::third_party;
    verdict.evidence.push_back("human_review");
  } else {
    verdict = verify_direct(leaf.plan.node, *leaf.artifact, policy);
  }
  flush_ledger();

  // Two-stage recursion when attestations ride along.
  if (!leaf.attestations.empty()) {
    ChainContext ctx;
    ctx.root_task_id = leaf.leaf_id;
    ctx.is_monitor = [this](const std::string& monitor,
                            const std::string& subject,
                            const std::string& subtask) {
      for (const std::string& id : contracts_.ids()) {
        const DelegationContract& c = contracts_.get(id);
        if (c.delegator.id == monitor && c.delegatee.id == subject &&
            c.spec.task_id == subtask) {
          return true;
        }
      }
      return false;
    };
    ctx.is_subtask_of = [](const std::string& parent, const std::string& child) {
      return child.starts_with(parent + ".");
    };
    ctx.is_certified = [this](const std::string& did) {
      auto it = name_by_did_.find(did);
      return it != name_by_did_.end() &&
             agents_.at(it->second).spec.certified_monitor;
    };
    ctx.require_certification =
        leaf.spec.verification_policy.mode == PolicyMode::strict;
    CompositeVerdict composite =
        verify_chain(reg_, verdict, leaf.attestations, ctx);
    verdict = composite.verdict;
    if (composite.failed_stage) {
      log(now_, "CHAIN_FAILURE",
          {{"task_id", leaf.leaf_id},
           {"stage", *composite.failed_stage == ChainStage::work ? 1 : 2},
           {"link", composite.failing_link ? static_cast<int>(*composite.failing_link)
                                           : -1}});
    }
  }

  log(now_, "VERDICT",
      {{"task_id", leaf_id},
       {"contract_id", leaf.contract_id},
       {"mechanism", mechanism},
       {"pass", verdict.pass},
       {"quality", verdict.quality}});

  if (verdict.pass) {
    // Gated release: verdict in hand, optimistic window still applies.
    const Tick window_end = contracts_.get(leaf.contract_id).window_end;
    leaf.artifact->quality_hint = verdict.quality;
    schedule(window_end, [this, leaf_id, attempt] {
      optimistic_settle(leaf_id, attempt);
    });
  } else {
    // Failing verdict: the delegator challenges to block the release.
    const DelegationContract& c = contracts_.get(leaf.contract_id);
    contracts_.challenge(leaf.contract_id, bank_, agent(leaf.delegator).id,
                         c.dispute_bond, now_);
    flush_ledger();
    log(now_, "CHALLENGE",
        {{"contract_id", leaf.contract_id},
         {"challenger", leaf.delegator},
         {"bond", c.dispute_bond}});
    log(now_, "CONTRACT_STATE",
        {{"contract_id", leaf.contract_id}, {"state", "Disputed"}});
    Verdict carried = verdict;
    schedule(now_ + 1, [this, leaf_id, attempt, carried] {
      LeafRt& l = leaves_.at(leaf_id);
      if (l.attempt != attempt || l.done) return;
      contracts_.arbitrate(l.contract_id);
      log(now_, "CONTRACT_STATE",
          {{"contract_id", l.contract_id}, {"state", "Arbitrated"}});
      // Algorithmic resolution failed; the panel decides.
      Verdict panel = panel_verdict(l, l.plan.node, *l.artifact);
      if (!panel.pass) {
        panel.quality = std::min(panel.quality, carried.quality);
      }
      settle_with_verdict(leaf_id, panel);
    });
  }
}

void Engine::optimistic_settle(const std::string& leaf_id,
                               std::uint64_t attempt) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.attempt != attempt || leaf.done) return;
  const DelegationContract& contract = contracts_.get(leaf.contract_id);
  if (contract.state != ContractState::Submitted) return;  // disputed meanwhile
  SettlementSummary s = contracts_.settle(leaf.contract_id, bank_, true, now_);
  flush_ledger();
  log(now_, "SETTLED",
      {{"contract_id", leaf.contract_id},
       {"task_id", leaf_id},
       {"pass", true},
       {"optimistic", true},
       {"escrow_to_delegatee", s.escrow_to_delegatee},
       {"stake_refunded", s.stake_refunded},
       {"challenger_bond_forfeited", s.challenger_bond_forfeited}});
  post_settlement(leaf_id, true,
                  leaf.artifact ? leaf.artifact->quality_hint : 1.0,
                  "optimistic");
}

void Engine::settle_with_verdict(const std::string& leaf_id,
                                 const Verdict& verdict) {
  LeafRt& leaf = leaves_.at(leaf_id);
  SettlementSummary s =
      contracts_.settle(leaf.contract_id, bank_, verdict.pass, now_);
  flush_ledger();
  log(now_, "SETTLED",
      {{"contract_id", leaf.contract_id},
       {"task_id", leaf_id},
       {"pass", verdict.pass},
       {"optimistic", false},
       {"escrow_to_delegatee", s.escrow_to_delegatee},
       {"escrow_to_delegator", s.escrow_to_delegator},
       {"stake_slashed", s.stake_slashed},
       {"challenger_bond_refunded", s.challenger_bond_refunded},
       {"challenger_bond_forfeited", s.challenger_bond_forfeited}});
  post_settlement(leaf_id, verdict.pass, verdict.quality,
                  mechanism_name(verdict.mechanism));
}

void Engine::record_reputation(const std::string& leaf_id, bool pass,
                               double quality, Tick deadline_tick) {
  LeafRt& leaf = leaves_.at(leaf_id);
  AgentRt& executor = agent(leaf.executor);
  AgentRt& delegator = agent(leaf.delegator);

  Verdict pseudo;
  pseudo.pass = pass;
  pseudo.quality = quality;
  VerifiableCredential cred = issue_completion_credential(
      reg_, delegator.id, executor.id, leaf.leaf_id, now_, leaf.spec.digest(),
      pseudo);
  OutcomeMeta meta;
  meta.success = pass;
  meta.quality = quality;
  meta.resources_vs_budget = leaf.overspent ? 2.0 : 1.0;
  meta.deadline_met = now_ <= deadline_tick;
  meta.constraints_met = !leaf.overspent;
  meta.transparency_obs =
      leaf.scheduled_events > 0
          ? static_cast<double>(leaf.delivered_events) /
                static_cast<double>(leaf.scheduled_events)
          : 1.0;
  double safety = 1.0;
  if (leaf.token_checks > 0) {
    safety -= 0.5 * static_cast<double>(leaf.token_denies) /
              static_cast<double>(leaf.token_checks);
  }
  if (leaf.overspent) safety -= 0.25;
  meta.safety_obs = std::max(0.0, safety);
  meta.tick = now_;
  meta.task_complexity = leaf.plan.node.characteristics.complexity;

  const std::size_t entry = repledger_.record(std::move(cred), meta);
  rep_entry_of_contract_[leaf.contract_id] = entry;
  const double composite = repledger_.score(executor.id.id, now_).composite;
  log(now_, "REP_RECORD",
      {{"agent", executor.spec.name},
       {"subject", executor.id.id},
       {"success", pass},
       {"quality", quality},
       {"composite", composite},
       {"entry", entry}});

  const BreakerTrip trip =
      circuit_breaker(repledger_, executor.id.id, cfg_.breaker);
  if (trip.tripped && !executor.revoked) {
    trip_breaker(executor.spec.name);
  }
}

void Engine::post_settlement(const std::string& leaf_id, bool pass,
                             double quality, const std::string& mechanism) {
  LeafRt& leaf = leaves_.at(leaf_id);
  AgentRt& executor = agent(leaf.executor);
  const Tick deadline =
      leaf.exec_start + leaf.plan.node.characteristics.duration_est * 2;
  record_reputation(leaf_id, pass, quality, deadline);
  (void)mechanism;

  if (executor.busy > 0) --executor.busy;

  // Backdoor implants pass now and surface later as a retroactive update.
  if (pass && leaf.backdoor_flag) {
    const std::string contract_id = leaf.contract_id;
    const std::string executor_name = leaf.executor;
    schedule(now_ + 50, [this, contract_id, executor_name] {
      auto it = rep_entry_of_contract_.find(contract_id);
      if (it == rep_entry_of_contract_.end()) return;
      OutcomeMeta corrected = repledger_.entries()[it->second].meta;
      corrected.success = false;
      corrected.quality = 0.0;
      corrected.safety_obs = 0.0;
      repledger_.retroactive_update(it->second, corrected);
      AgentRt& culprit = agent(executor_name);
      const double composite =
          repledger_.score(culprit.id.id, now_).composite;
      log(now_, "RETROACTIVE_UPDATE",
          {{"agent", executor_name},
           {"contract_id", contract_id},
           {"composite", composite}});
      const BreakerTrip trip =
          circuit_breaker(repledger_, culprit.id.id, cfg_.breaker);
      if (trip.tripped && !culprit.revoked) trip_breaker(executor_name);
    });
  }

  if (pass) {
    finish_leaf(leaf_id, true);
  } else if (leaf.is_sub) {
    finish_leaf(leaf_id, false);
  } else {
    // Failed verification on a reversible task: re-delegate via the retained
    // alternatives; irreversible-critical tasks terminate instead.
    Trigger t{TriggerKind::VerificationFailure, leaf_id,
              {"contract:" + leaf.contract_id}, now_};
    handle_trigger(leaf_id, t);
  }
}

void Engine::finish_leaf(const std::string& leaf_id, bool ok) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.done) return;
  leaf.done = true;
  leaf.ok = ok;
  ++leaf.attempt;  // cancels in-flight sweeps and completions

  if (!leaf.is_sub) {
    log(now_, "WORK_DONE", {{"task_id", leaf_id}, {"ok", ok}});
    AgentRt& delegator = agent(leaf.delegator);
    if (leaf.started && delegator.busy > 0) --delegator.busy;
    auto& queue = pending_[leaf.delegator];
    if (!queue.empty()) {
      const std::string next = queue.front();
      queue.pop_front();
      schedule(now_, [this, next] { maybe_start_leaf(next); });
    }
    RootRt& root = roots_.at(leaf.root_id);
    root.leaves_left.erase(leaf_id);
    if (!ok) root.failed = true;
    if (ok) {
      for (const std::string& dep : leaf.dependents) {
        auto it = leaves_.find(dep);
        if (it != leaves_.end()) {
          it->second.deps.erase(leaf_id);
          maybe_start_leaf(dep);
        }
      }
    } else {
      fail_dependents(leaf_id);
    }
    check_root_done(leaf.root_id);
  } else {
    // Sub-task outcome feeds the parent's submission.
    auto parent_it = leaves_.find(leaf.parent_leaf);
    if (parent_it != leaves_.end() && !parent_it->second.done) {
      LeafRt& parent = parent_it->second;
      AgentRt& contractor = agent(parent.executor);
      AgentRt& partner = agent(leaf.executor);
      if (partner.busy > 0) --partner.busy;

      const double measured_quality =
          leaf.artifact ? oracle_evaluate(leaf.plan.node, *leaf.artifact) : 0.0;
      AttestationSummary summary;
      summary.completed = ok;
      summary.quality = measured_quality;
      summary.resources = 5;
      AttestationReport report =
          attest(reg_, contractor.id, partner.id, leaf.leaf_id, summary,
                 "status:" + parent.contract_id);
      parent.attestations = {report};
      log(now_, "ATTESTATION",
          {{"attester", parent.executor},
           {"subject", leaf.executor},
           {"subtask_id", leaf.leaf_id},
           {"completed", ok},
           {"quality", measured_quality}});

      const std::string parent_id = parent.leaf_id;
      const std::uint64_t parent_attempt = parent.attempt;
      schedule(now_ + 1, [this, parent_id, parent_attempt, ok] {
        LeafRt& p = leaves_.at(parent_id);
        if (p.attempt != parent_attempt || p.done) return;
        AgentRt& executor = agent(p.executor);
        // The contractor integrates the partner's work into its own artifact.
        p.artifact = make_artifact(p.plan.node, executor.id, ok ? 0.0 : 1.0);
        ProgressEvent done_ev = ProgressEvent::make(
            reg_, now_, parent_id, executor.id, EventKind::TASK_COMPLETED,
            Granularity::L0, {{"integrated", p.sub_leaf}});
        status_.record(done_ev);
        ++p.scheduled_events;
        ++p.delivered_events;
        log(now_, "PROGRESS", done_ev);
        contracts_.submit_outcome(p.contract_id, now_);
        log(now_, "CONTRACT_STATE",
            {{"contract_id", p.contract_id},
             {"state", "Submitted"},
             {"window_end", contracts_.get(p.contract_id).window_end}});
        run_verification(parent_id);
      });
    }
  }
}

void Engine::fail_dependents(const std::string& leaf_id) {
  LeafRt& leaf = leaves_.at(leaf_id);
  for (const std::string& dep : leaf.dependents) {
    auto it = leaves_.find(dep);
    if (it == leaves_.end() || it->second.done) continue;
    if (it->second.started) continue;  // already running; let it finish
    finish_leaf(dep, false);
  }
}

void Engine::check_root_done(const std::string& root_id) {
  RootRt& root = roots_.at(root_id);
  if (root.counted || !root.leaves_left.empty()) return;
  root.counted = true;
  if (root.failed) {
    log(now_, "ROOT_FAILED", {{"task_id", root_id}, {"reason", "leaf_failure"}});
  } else {
    log(now_, "ROOT_COMPLETED", {{"task_id", root_id}});
  }
}

// ---------------------------------------------------------------------------
// coordination
// ---------------------------------------------------------------------------

void Engine::schedule_sweep(const std::string& leaf_id, std::uint64_t attempt) {
  const LeafRt& leaf = leaves_.at(leaf_id);
  const Tick cadence = std::max<Tick>(1, leaf.spec.reporting_cadence);
  const Tick at = now_ + cadence;
  if (at > scenario_.horizon) return;
  schedule(at, [this, leaf_id, attempt] { sweep(leaf_id, attempt); });
}

void Engine::sweep(const std::string& leaf_id, std::uint64_t attempt) {
  auto it = leaves_.find(leaf_id);
  if (it == leaves_.end()) return;
  LeafRt& leaf = it->second;
  if (leaf.attempt != attempt || leaf.done || leaf.response_inflight) return;
  if (leaf.contract_id.empty()) return;
  const DelegationContract& contract = contracts_.get(leaf.contract_id);
  if (contract.state != ContractState::Active) {
    if (contract.state == ContractState::Submitted ||
        contract.state == ContractState::Disputed ||
        contract.state == ContractState::Arbitrated) {
      schedule_sweep(leaf_id, attempt);  // settlement in flight
    }
    return;
  }

  ContractView view;
  view.task_id = leaf_id;
  view.contract_id = leaf.contract_id;
  view.start_tick = leaf.exec_start;
  view.duration_est = leaf.exec_duration;
  view.cadence = contract.monitoring_plan.cadence;
  view.backup_set = contract.backup_agent.has_value();
  DetectConfig dc;
  dc.slo_fraction = cfg_.detect_slo;
  dc.grace = 3 * contract.monitoring_plan.cadence;
  dc.budget_units =
      leaf.budget_units * std::pow(1.5, static_cast<double>(leaf.param_adjusts));

  std::vector<Trigger> triggers =
      detect(view, status_.stream(leaf_id), {}, now_, dc);
  if (triggers.empty()) {
    schedule_sweep(leaf_id, attempt);
    return;
  }
  handle_trigger(leaf_id, triggers.front());
  if (!leaf.response_inflight && !leaf.done) schedule_sweep(leaf_id, attempt);
}

void Engine::handle_trigger(const std::string& leaf_id, const Trigger& trigger) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.done || leaf.response_inflight) return;
  log(now_, "TRIGGER",
      {{"kind", trigger_kind_name(trigger.kind)},
       {"task_id", leaf_id},
       {"severity", trigger.severity}});

  const RootRt& root = roots_.at(leaf.root_id);
  const bool alternatives = !root.alternatives.empty();
  const bool backup = leaf.backup_agent.has_value();
  const ReputationScore score =
      repledger_.score(agent(leaf.executor).id.id, now_);
  const AuthorityGrant grant = graduated_authority(
      score, leaf.plan.node.characteristics.criticality, cfg_.grants);

  ResponsePlan plan =
      select_response(trigger, leaf.plan.node.characteristics, alternatives,
                      backup, grant, cfg_.response);
  plan.contract_id = leaf.contract_id;

  // Repeated parameter adjustments stop helping; switch to re-delegation.
  if (plan.action == ResponseAction::AdjustParams && leaf.param_adjusts >= 2) {
    plan.action = ResponseAction::ReDelegateSubtask;
    plan.uses_backup = backup;
  }

  log(now_, "RESPONSE",
      {{"action", response_action_name(plan.action)},
       {"task_id", leaf_id},
       {"urgency", plan.urgency == Urgency::immediate ? "immediate" : "scheduled"},
       {"uses_backup", plan.uses_backup}});

  switch (plan.action) {
    case ResponseAction::AdjustParams:
      ++leaf.param_adjusts;
      break;
    case ResponseAction::ReDelegateSubtask:
    case ResponseAction::ReDecompose: {
      const DelegationContract& c = contracts_.get(leaf.contract_id);
      redelegate(leaf_id, plan.uses_backup,
                 c.state == ContractState::Active);
      break;
    }
    case ResponseAction::Escalate:
      log(now_, "ESCALATION", {{"task_id", leaf_id}});
      leaf.response_inflight = true;
      schedule(now_ + cfg_.human_approval_latency, [this, leaf_id] {
        terminate_leaf(leaf_id, true);
      });
      break;
    case ResponseAction::Terminate:
      terminate_leaf(leaf_id, false);
      break;
  }
}

void Engine::terminate_leaf(const std::string& leaf_id, bool escalated) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.done) return;
  leaf.response_inflight = false;
  if (!leaf.contract_id.empty()) {
    const DelegationContract& c = contracts_.get(leaf.contract_id);
    if (c.state == ContractState::Active) {
      double fraction = 0.0;
      if (leaf.last_snapshot) {
        try {
          fraction = resume(reg_, leaf.plan.node, *leaf.last_snapshot);
        } catch (const SimError&) {
          fraction = 0.0;
        }
      }
      contracts_.cancel(leaf.contract_id, bank_, now_, fraction);
      flush_ledger();
      log(now_, "CONTRACT_STATE",
          {{"contract_id", leaf.contract_id},
           {"state", "Cancelled"},
           {"compensated_fraction", fraction}});
      AgentRt& executor = agent(leaf.executor);
      if (executor.busy > 0) --executor.busy;
    }
  }
  log(now_, "TERMINATED", {{"task_id", leaf_id}, {"escalated", escalated}});
  finish_leaf(leaf_id, false);
}

void Engine::redelegate(const std::string& leaf_id, bool use_backup,
                        bool contract_active) {
  LeafRt& leaf = leaves_.at(leaf_id);
  if (leaf.done || now_ >= scenario_.horizon) {
    return;  // wind-down resolves stragglers
  }

  StabilityOutcome gate =
      apply_stability(cfg_.stability, leaf.redelegations, now_);
  if (gate.decision == StabilityDecision::Abort) {
    log(now_, "STABILITY", {{"task_id", leaf_id}, {"decision", "Abort"}});
    log(now_, "ESCALATION", {{"task_id", leaf_id}});
    terminate_leaf(leaf_id, true);
    return;
  }
  if (gate.decision == StabilityDecision::Defer) {
    log(now_, "STABILITY",
        {{"task_id", leaf_id},
         {"decision", "Defer"},
         {"until", gate.defer_until}});
    leaf.response_inflight = true;
    const std::uint64_t attempt = leaf.attempt;
    schedule(gate.defer_until, [this, leaf_id, use_backup, attempt] {
      LeafRt& l = leaves_.at(leaf_id);
      if (l.attempt != attempt || l.done) return;
      l.response_inflight = false;
      const DelegationContract& c = contracts_.get(l.contract_id);
      redelegate(leaf_id, use_backup, c.state == ContractState::Active);
    });
    return;
  }

  AgentRt& delegator = agent(leaf.delegator);
  bank_.transfer(delegator.account, "sink:market", gate.fee, LedgerReason::fee,
                 now_);
  flush_ledger();
  leaf.redelegations.push_back(now_);
  log(now_, "STABILITY",
      {{"task_id", leaf_id}, {"decision", "Proceed"}, {"fee", gate.fee}});
  log(now_, "REDELEGATION",
      {{"task_id", leaf_id},
       {"n", leaf.redelegations.size()},
       {"fee", gate.fee}});

  // Recover the verified fraction before the old contract unwinds.
  double fraction = 0.0;
  if (leaf.last_snapshot) {
    try {
      fraction = resume(reg_, leaf.plan.node, *leaf.last_snapshot);
    } catch (const SimError&) {
      log(now_, "CORRUPT_SNAPSHOT", {{"task_id", leaf_id}});
      fraction = 0.0;
    }
  }

  const std::string old_contract = leaf.contract_id;
  const std::string old_executor = leaf.executor;

  std::optional<Bid> direct_award;
  if (use_backup && leaf.backup_agent) {
    AgentRt& backup = agent(*leaf.backup_agent);
    if (!backup.revoked && backup.busy < backup.spec.capacity &&
        bank_.balance(backup.account) >= cfg_.min_stake) {
      direct_award =
          Bid::make(reg_, backup.id, leaf.backup_price,
                    leaf.plan.node.characteristics.duration_est,
                    PrivacyGuarantee::none, cfg_.min_stake, now_ + 1000);
    }
  }

  if (contract_active) {
    const Amount new_price =
        direct_award ? direct_award->estimated_cost
                     : contracts_.get(old_contract).escrow_amount;
    if (fraction > 0.0 &&
        contracts_.get(old_contract).checkpoint_compensation) {
      const Amount released = contracts_.checkpoint_compensation(
          old_contract, bank_, fraction, now_);
      flush_ledger();
      log(now_, "CHECKPOINT_COMPENSATION",
          {{"contract_id", old_contract},
           {"fraction", fraction},
           {"released", released}});
    }
    const Amount penalty =
        contracts_.default_contract(old_contract, bank_, new_price, now_);
    flush_ledger();
    log(now_, "CONTRACT_STATE",
        {{"contract_id", old_contract},
         {"state", "Defaulted"},
         {"penalty", penalty}});
    contracts_.mark_reauctioned(old_contract);
    log(now_, "CONTRACT_STATE",
        {{"contract_id", old_contract}, {"state", "Reauctioned"}});
    AgentRt& old = agent(old_executor);
    if (old.busy > 0) --old.busy;
  }

  ++leaf.attempt;
  leaf.response_inflight = false;
  leaf.resumed_fraction = fraction;
  leaf.attestations.clear();
  leaf.artifact.reset();
  leaf.sub_leaf.clear();
  leaf.param_adjusts = 0;

  if (direct_award) {
    // Pre-agreed backup clause: automatic re-allocation, no new auction.
    AgentRt& backup = agent(*leaf.backup_agent);
    bank_.transfer(backup.account, MarketBook::kBondPool,
                   direct_award->reputation_bond, LedgerReason::bond, now_);
    flush_ledger();
    log(now_, "BACKUP_AWARD",
        {{"task_id", leaf_id}, {"agent", *leaf.backup_agent},
         {"price", direct_award->estimated_cost}});
    leaf.backup_agent.reset();
    award_contract(leaf_id, *direct_award, {});
  } else {
    schedule(now_, [this, leaf_id] { start_leaf(leaf_id); });
  }
}

void Engine::trip_breaker(const std::string& agent_name) {
  AgentRt& culprit = agent(agent_name);
  culprit.revoked = true;
  log(now_, "BREAKER_TRIP", {{"agent", agent_name}});
  try {
    RevocationNotice notice = authority_.revoke_agent(culprit.id, now_);
    log(now_, "REVOCATION",
        {{"agent", agent_name}, {"is_agent", notice.is_agent}});
  } catch (const SimError& e) {
    if (e.code() != Errc::not_found) throw;
    // Holds no tokens yet; the flag alone bars future wins.
  }
  // Suspend the culprit's active contracts.
  for (auto& [leaf_id, leaf] : leaves_) {
    if (leaf.done || leaf.executor != agent_name || leaf.contract_id.empty()) {
      continue;
    }
    const DelegationContract& c = contracts_.get(leaf.contract_id);
    if (c.state == ContractState::Active) {
      Trigger t{TriggerKind::SecurityFlag, leaf_id, {}, now_};
      const std::string id = leaf_id;
      schedule(now_, [this, id, t] {
        auto it = leaves_.find(id);
        if (it != leaves_.end() && !it->second.done) handle_trigger(id, t);
      });
    }
  }
}

// ---------------------------------------------------------------------------
// wind-down + main loop
// ---------------------------------------------------------------------------

void Engine::wind_down() {
  for (const std::string& rfq_id : market_.open_rfqs()) {
    market_.close_rfq(rfq_id, bank_, now_);
  }
  flush_ledger();
  for (auto& [leaf_id, leaf] : leaves_) {
    if (leaf.done || leaf.contract_id.empty()) continue;
    const DelegationContract& c = contracts_.get(leaf.contract_id);
    if (c.state == ContractState::Active) {
      terminate_leaf(leaf_id, false);
    } else if (c.state == ContractState::Submitted) {
      // Window still open at quiescence: resolve optimistically.
      SettlementSummary s =
          contracts_.settle(leaf.contract_id, bank_,
                            true, std::max(now_, c.window_end));
      flush_ledger();
      log(now_, "SETTLED",
          {{"contract_id", leaf.contract_id},
           {"task_id", leaf_id},
           {"pass", true},
           {"optimistic", true},
           {"escrow_to_delegatee", s.escrow_to_delegatee}});
      finish_leaf(leaf_id, true);
    } else if (!leaf.done) {
      finish_leaf(leaf_id, false);
    }
  }
  for (auto& [root_id, root] : roots_) {
    if (!root.counted && root.leaves_left.empty()) check_root_done(root_id);
    if (!root.counted) {
      root.counted = true;
      root.failed = true;
      log(now_, "ROOT_FAILED", {{"task_id", root_id}, {"reason", "horizon"}});
    }
  }
  const auto stranded = contracts_.stranded_accounts(bank_);
  log(now_, "AUDIT",
      {{"stranded_accounts", stranded},
       {"bond_pool", bank_.balance(MarketBook::kBondPool)},
       {"total", bank_.total()},
       {"conserved", bank_.total() == initial_total_}});
  for (const auto& [name, rt] : agents_) {
    if (!rt.operator_name.empty()) continue;  // sybils share the operator account
    log(now_, "BALANCE",
        {{"agent", name},
         {"account", rt.account},
         {"balance", bank_.balance(rt.account)}});
  }
}

RunResult Engine::run() {
  scenario_.validate();
  register_agents();
  build_registry();
  schedule_workload();

  while (!queue_.empty()) {
    Scheduled ev = queue_.top();
    queue_.pop();
    if (ev.tick != now_) {
      // Tick boundary: conservation must hold exactly.
      if (bank_.total() != initial_total_) {
        fail(Errc::invariant_violation,
             "money conservation violated at tick " + std::to_string(now_));
      }
      now_ = ev.tick;
    }
    ev.fn();
    flush_ledger();
  }
  if (bank_.total() != initial_total_) {
    fail(Errc::invariant_violation, "money conservation violated at drain");
  }
  wind_down();
  if (bank_.total() != initial_total_) {
    fail(Errc::invariant_violation, "money conservation violated at wind-down");
  }

  RunResult result;
  result.log_lines = log_lines_;
  result.event_log_digest = log_digest(log_lines_);
  result.metrics = compute_metrics(log_events_);
  return result;
}

}  // namespace

RunResult run(const Scenario& scenario) { return Engine(scenario).run(); }

}  // namespace delsim
