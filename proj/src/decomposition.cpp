#include "delsim/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "delsim/rng.hpp"

namespace delsim {

// --------------------------------------------------------------------------
// CapabilityRegistry
// --------------------------------------------------------------------------

void CapabilityRegistry::add(CapabilityEntry entry) {
  entries_.push_back(std::move(entry));
}

std::vector<const CapabilityEntry*> CapabilityRegistry::capable_of(
    const std::set<std::string>& capabilities) const {
  std::vector<const CapabilityEntry*> out;
  for (const CapabilityEntry& e : entries_) {
    bool all = std::all_of(capabilities.begin(), capabilities.end(),
                           [&](const std::string& c) {
                             return e.capabilities.count(c) > 0;
                           });
    if (all) out.push_back(&e);
  }
  return out;
}

bool CapabilityRegistry::has_human_reviewers() const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [](const CapabilityEntry& e) { return e.human; });
}

std::size_t CapabilityRegistry::verifier_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(),
                    [](const CapabilityEntry& e) { return e.verifier; }));
}

bool CapabilityRegistry::has_certified_auditor(
    const std::set<std::string>& capabilities) const {
  for (const CapabilityEntry* e : capable_of(capabilities)) {
    if (e->certified_auditor) return true;
  }
  return false;
}

bool CapabilityRegistry::has_proof_capable() const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [](const CapabilityEntry& e) { return e.proof_capable; });
}

CapabilityRegistry CapabilityRegistry::from_json(const nlohmann::json& j) {
  CapabilityRegistry reg;
  reg.supports_direct = j.value("supports_direct", true);
  for (const auto& a : j.at("agents")) {
    CapabilityEntry e;
    e.agent_id = a.at("agent_id").get<std::string>();
    if (a.contains("capabilities")) {
      e.capabilities = a.at("capabilities").get<std::set<std::string>>();
    }
    e.reliability = a.value("reliability", 0.9);
    e.cost_factor = a.value("cost_factor", 1.0);
    e.speed_factor = a.value("speed_factor", 1.0);
    e.verifier = a.value("verifier", false);
    e.certified_auditor = a.value("certified_auditor", false);
    e.proof_capable = a.value("proof_capable", false);
    e.human = a.value("human", false);
    reg.add(std::move(e));
  }
  return reg;
}

nlohmann::json CapabilityRegistry::to_json() const {
  nlohmann::json agents = nlohmann::json::array();
  for (const CapabilityEntry& e : entries_) {
    agents.push_back({{"agent_id", e.agent_id},
                      {"capabilities", e.capabilities},
                      {"reliability", e.reliability},
                      {"cost_factor", e.cost_factor},
                      {"speed_factor", e.speed_factor},
                      {"verifier", e.verifier},
                      {"certified_auditor", e.certified_auditor},
                      {"proof_capable", e.proof_capable},
                      {"human", e.human}});
  }
  return {{"agents", agents}, {"supports_direct", supports_direct}};
}

// --------------------------------------------------------------------------
// Proposal construction
// --------------------------------------------------------------------------

namespace {

std::vector<std::string> verification_modes_for(
    const TaskNode& leaf, const CapabilityRegistry& registry, double tau_v) {
  std::vector<std::string> modes;
  if (leaf.human_required) {
    if (registry.has_human_reviewers()) modes.emplace_back("human_review");
    return modes;
  }
  if (leaf.characteristics.verifiability < tau_v) {
    return modes;  // too costly to validate: contract-first bars delegation
  }
  if (registry.supports_direct) modes.emplace_back("direct");
  if (registry.has_proof_capable()) modes.emplace_back("proof");
  if (registry.has_certified_auditor(leaf.characteristics.resource_requirements)) {
    modes.emplace_back("third_party");
  }
  if (registry.verifier_count() >= 3) modes.emplace_back("consensus");
  return modes;
}

void collect_leaves(const TaskNode& node, std::vector<const TaskNode*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  for (const TaskNode& child : node.children) collect_leaves(child, out);
}

// Leaf-level ordering edges: for a sequential parent, every leaf of child i
// precedes every leaf of child i+1.
void collect_edges(const TaskNode& node,
                   std::vector<std::pair<std::string, std::string>>& edges) {
  if (node.is_leaf()) return;
  for (const TaskNode& child : node.children) collect_edges(child, edges);
  if (node.ordering == Ordering::sequential) {
    for (std::size_t i = 0; i + 1 < node.children.size(); ++i) {
      std::vector<const TaskNode*> from, to;
      collect_leaves(node.children[i], from);
      collect_leaves(node.children[i + 1], to);
      for (const TaskNode* a : from) {
        for (const TaskNode* b : to) {
          edges.emplace_back(a->task_id, b->task_id);
        }
      }
    }
  }
}

// Manufactures children for a synthetic split: verifiability uplift delta_v,
// cost and duration divided across the children (sums preserved up to
// rounding), ground truth derived from the parent seed.
std::vector<TaskNode> split_leaf(const TaskNode& leaf, std::uint32_t branching,
                                 double delta_v) {
  std::vector<TaskNode> children;
  Amount cost_left = leaf.characteristics.cost_est;
  Tick duration_left = leaf.characteristics.duration_est;
  for (std::uint32_t i = 0; i < branching; ++i) {
    TaskNode child = leaf;
    child.children.clear();
    child.task_id = leaf.task_id + ".s" + std::to_string(i);
    child.ground_truth = DetRng::derive(leaf.ground_truth, child.task_id);
    TaskCharacteristics& c = child.characteristics;
    c.verifiability = std::min(1.0, c.verifiability + delta_v);
    const auto remaining = static_cast<Amount>(branching - i);
    Amount cost_share = cost_left / remaining;
    Tick duration_share =
        std::max<Tick>(1, duration_left / static_cast<Tick>(branching - i));
    c.cost_est = cost_share;
    c.duration_est = duration_share;
    cost_left -= cost_share;
    duration_left -= std::min(duration_left, duration_share);
    children.push_back(std::move(child));
  }
  return children;
}

void replace_leaf_in_dag(DecompositionProposal& proposal,
                         const std::string& old_id,
                         const std::vector<TaskNode>& children) {
  std::vector<std::pair<std::string, std::string>> edges;
  for (auto& [from, to] : proposal.dag) {
    if (from == old_id && to == old_id) continue;
    if (from == old_id) {
      edges.emplace_back(children.back().task_id, to);
    } else if (to == old_id) {
      edges.emplace_back(from, children.front().task_id);
    } else {
      edges.emplace_back(from, to);
    }
  }
  // Split children execute sequentially.
  for (std::size_t i = 0; i + 1 < children.size(); ++i) {
    edges.emplace_back(children[i].task_id, children[i + 1].task_id);
  }
  proposal.dag = std::move(edges);
}

std::string proposal_digest_id(const DecompositionProposal& p) {
  CanonicalWriter w;
  w.str(p.root_task_id);
  w.u64(p.leaves.size());
  for (const LeafAssignmentPlan& leaf : p.leaves) {
    w.str(leaf.node.task_id);
    w.u64(leaf.node.human_required ? 1 : 0);
  }
  return "prop-" + to_hex(as_span(w.digest())).substr(0, 12);
}

double scalarized_score(const ProposalEstimates& e, Amount max_cost,
                        Tick max_makespan) {
  double cost_norm = max_cost > 0 ? static_cast<double>(e.total_cost) /
                                        static_cast<double>(max_cost)
                                  : 0.0;
  double makespan_norm = max_makespan > 0
                             ? static_cast<double>(e.makespan) /
                                   static_cast<double>(max_makespan)
                             : 0.0;
  return (1.0 - e.success_prob) + cost_norm + makespan_norm;
}

}  // namespace

const LeafAssignmentPlan* DecompositionProposal::find_leaf(
    const std::string& task_id) const {
  for (const LeafAssignmentPlan& leaf : leaves) {
    if (leaf.node.task_id == task_id) return &leaf;
  }
  return nullptr;
}

Tick dag_makespan(const DecompositionProposal& proposal,
                  double human_latency_mult) {
  std::map<std::string, Tick> weight;
  for (const LeafAssignmentPlan& leaf : proposal.leaves) {
    double d = static_cast<double>(leaf.node.characteristics.duration_est);
    if (leaf.node.human_required) d *= human_latency_mult;
    weight[leaf.node.task_id] = static_cast<Tick>(std::llround(d));
  }
  // Longest path via repeated relaxation; leaf counts stay small.
  std::map<std::string, Tick> finish;
  for (const auto& [id, w] : weight) finish[id] = w;
  bool changed = true;
  std::size_t guard = proposal.leaves.size() + 1;
  while (changed && guard-- > 0) {
    changed = false;
    for (const auto& [from, to] : proposal.dag) {
      auto fit = finish.find(from);
      auto tit = finish.find(to);
      if (fit == finish.end() || tit == finish.end()) continue;
      Tick candidate = fit->second + weight[to];
      if (candidate > tit->second) {
        tit->second = candidate;
        changed = true;
      }
    }
  }
  Tick best = 0;
  for (const auto& [_, f] : finish) best = std::max(best, f);
  return best;
}

ProposalEstimates estimate(const DecompositionProposal& proposal,
                           const CapabilityRegistry& registry) {
  ProposalEstimates e;
  for (const LeafAssignmentPlan& leaf : proposal.leaves) {
    auto capable = registry.capable_of(leaf.required_capabilities);
    if (capable.empty()) {
      e.success_prob = 0.0;
      continue;
    }
    double best_reliability = 0.0;
    double best_cost_factor = 1.0;
    for (const CapabilityEntry* entry : capable) {
      if (entry->reliability > best_reliability) {
        best_reliability = entry->reliability;
        best_cost_factor = entry->cost_factor;
      }
    }
    e.success_prob *= best_reliability;
    double cost = static_cast<double>(leaf.node.characteristics.cost_est) *
                  best_cost_factor;
    e.total_cost += static_cast<Amount>(std::llround(cost));
  }
  e.makespan = dag_makespan(proposal, 1.0);
  return e;
}

DecompositionProposal refine_contract_first(DecompositionProposal proposal,
                                            const CapabilityRegistry& registry,
                                            const DecompConfig& config) {
  bool progress = true;
  while (progress) {
    progress = false;
    std::vector<LeafAssignmentPlan> next;
    for (LeafAssignmentPlan& leaf : proposal.leaves) {
      TaskCharacteristics& c = leaf.node.characteristics;
      const bool too_subjective = c.subjectivity > config.tau_s;
      if (too_subjective && registry.has_human_reviewers()) {
        if (!leaf.node.human_required) {
          leaf.node.human_required = true;
          progress = true;
        }
        next.push_back(std::move(leaf));
        continue;
      }
      const bool unverifiable = c.verifiability < config.tau_v;
      if (!unverifiable && !too_subjective) {
        next.push_back(std::move(leaf));
        continue;
      }
      if (leaf.refine_depth >= config.max_refine_depth) {
        fail(Errc::undecomposable_task,
             "refinement depth exhausted at leaf " + leaf.node.task_id);
      }
      std::vector<TaskNode> children =
          split_leaf(leaf.node, config.split_branching, config.delta_v);
      replace_leaf_in_dag(proposal, leaf.node.task_id, children);
      for (TaskNode& child : children) {
        LeafAssignmentPlan plan;
        plan.node = std::move(child);
        plan.required_capabilities = leaf.required_capabilities;
        plan.refine_depth = leaf.refine_depth + 1;
        next.push_back(std::move(plan));
      }
      progress = true;
    }
    proposal.leaves = std::move(next);
  }
  for (LeafAssignmentPlan& leaf : proposal.leaves) {
    leaf.candidate_verification_modes =
        verification_modes_for(leaf.node, registry, config.tau_v);
    if (leaf.candidate_verification_modes.empty()) {
      fail(Errc::undecomposable_task,
           "no verification mode available for leaf " + leaf.node.task_id);
    }
  }
  proposal.estimates = estimate(proposal, registry);
  proposal.proposal_id = proposal_digest_id(proposal);
  return proposal;
}

std::vector<DecompositionProposal> propose(const TaskNode& root,
                                           const CapabilityRegistry& registry,
                                           std::uint32_t k,
                                           const DecompConfig& config) {
  if (k < 1) fail(Errc::config_error, "k must be >= 1");
  if (registry.empty()) fail(Errc::config_error, "registry is empty");

  std::vector<const TaskNode*> natural_leaves;
  collect_leaves(root, natural_leaves);
  for (const TaskNode* leaf : natural_leaves) {
    if (registry.capable_of(leaf->characteristics.resource_requirements)
            .empty()) {
      fail(Errc::undecomposable_task,
           "no registered capability matches leaf " + leaf->task_id);
    }
  }

  std::vector<DecompositionProposal> proposals;
  std::set<std::string> seen;
  for (std::uint32_t variant = 0; variant < k; ++variant) {
    DecompositionProposal p;
    p.root_task_id = root.task_id;
    for (const TaskNode* leaf : natural_leaves) {
      LeafAssignmentPlan plan;
      plan.node = *leaf;
      plan.required_capabilities = leaf->characteristics.resource_requirements;
      p.leaves.push_back(std::move(plan));
    }
    collect_edges(root, p.dag);
    // Variant v pre-splits every leaf v times: coarser to finer granularity.
    for (std::uint32_t round = 0; round < variant; ++round) {
      std::vector<LeafAssignmentPlan> split;
      for (LeafAssignmentPlan& leaf : p.leaves) {
        std::vector<TaskNode> children =
            split_leaf(leaf.node, config.split_branching, config.delta_v);
        replace_leaf_in_dag(p, leaf.node.task_id, children);
        for (TaskNode& child : children) {
          LeafAssignmentPlan plan;
          plan.node = std::move(child);
          plan.required_capabilities = leaf.required_capabilities;
          plan.refine_depth = leaf.refine_depth + 1;
          split.push_back(std::move(plan));
        }
      }
      p.leaves = std::move(split);
    }
    try {
      p = refine_contract_first(std::move(p), registry, config);
    } catch (const SimError& e) {
      if (e.code() == Errc::undecomposable_task) continue;
      throw;
    }
    if (seen.insert(p.proposal_id).second) proposals.push_back(std::move(p));
  }
  if (proposals.empty()) {
    fail(Errc::undecomposable_task,
         "no proposal satisfies the contract-first property for " +
             root.task_id);
  }

  Amount max_cost = 0;
  Tick max_makespan = 0;
  for (const auto& p : proposals) {
    max_cost = std::max(max_cost, p.estimates.total_cost);
    max_makespan = std::max(max_makespan, p.estimates.makespan);
  }
  std::sort(proposals.begin(), proposals.end(),
            [&](const DecompositionProposal& a, const DecompositionProposal& b) {
              double sa = scalarized_score(a.estimates, max_cost, max_makespan);
              double sb = scalarized_score(b.estimates, max_cost, max_makespan);
              if (sa != sb) return sa < sb;
              return a.proposal_id < b.proposal_id;
            });
  return proposals;
}

DecompositionProposal mark_human_nodes(DecompositionProposal proposal,
                                       const HumanAllocationPolicy& policy,
                                       const CapabilityRegistry& registry) {
  for (LeafAssignmentPlan& leaf : proposal.leaves) {
    const TaskCharacteristics& c = leaf.node.characteristics;
    if (c.subjectivity > policy.subjectivity_threshold ||
        c.criticality >= policy.criticality_threshold) {
      leaf.node.human_required = true;
      if (registry.has_human_reviewers()) {
        leaf.candidate_verification_modes = {"human_review"};
      }
    }
  }
  // Latency and cost asymmetries of human allocation show up in the
  // estimates, not in the task's intrinsic characteristics.
  proposal.estimates = estimate(proposal, registry);
  Amount human_cost = 0;
  for (const LeafAssignmentPlan& leaf : proposal.leaves) {
    if (leaf.node.human_required) {
      double extra = static_cast<double>(leaf.node.characteristics.cost_est) *
                     (policy.human_cost_mult - 1.0);
      human_cost += static_cast<Amount>(std::llround(extra));
    }
  }
  proposal.estimates.total_cost += human_cost;
  proposal.estimates.makespan =
      dag_makespan(proposal, policy.human_latency_mult);
  return proposal;
}

const std::vector<ModeRow>& default_mode_table() {
  static const std::vector<ModeRow> table = {
      {PolicyMode::spot, 0.4, 20'000, 10, Granularity::L0, false},
      {PolicyMode::standard, 0.8, 60'000, 5, Granularity::L1, true},
      {PolicyMode::strict, 1.0, 150'000, 2, Granularity::L2, true},
  };
  return table;
}

TaskSpecification finalize(const LeafAssignmentPlan& leaf, Amount budget_share,
                           const DecompConfig& config) {
  (void)config;
  TaskSpecification spec;
  spec.task_id = leaf.node.task_id;
  spec.human_required = leaf.node.human_required;
  spec.role = leaf.required_capabilities.empty()
                  ? "executor"
                  : "executor:" + *leaf.required_capabilities.begin();
  spec.spend_cap = budget_share;
  spec.resource_scope = {"/tasks/" + leaf.node.task_id};

  // Cheapest mode whose assurance covers the leaf's criticality.
  const ModeRow* chosen = &default_mode_table().front();
  for (const ModeRow& row : default_mode_table()) {
    if (row.assurance >= leaf.node.characteristics.criticality) {
      chosen = &row;
      break;
    }
  }
  spec.reporting_cadence = chosen->cadence;
  spec.reporting_granularity = chosen->granularity;
  spec.verification_policy.mode = chosen->mode;
  spec.verification_policy.escrow_trigger = chosen->escrow_trigger;
  if (chosen->mode != PolicyMode::spot) {
    PolicyArtifact a;
    a.type = "unit_test_log";
    a.validator = "test-runner";
    a.signature_required = chosen->mode == PolicyMode::strict;
    spec.verification_policy.artifacts.push_back(std::move(a));
  }
  if (spec.human_required) {
    PolicyArtifact a;
    a.type = "audit_report";
    a.validator = "human-reviewer";
    a.signature_required = true;
    spec.verification_policy.artifacts.push_back(std::move(a));
    spec.required_certifications.insert("human_reviewer");
  }
  if (chosen->mode == PolicyMode::strict) {
    spec.required_certifications.insert("certified_monitor");
  }
  return spec;
}

Digest32 TaskSpecification::digest() const {
  CanonicalWriter w;
  w.str(task_id).str(role).i64(spend_cap);
  w.u64(resource_scope.size());
  for (const auto& s : resource_scope) w.str(s);
  w.u64(reporting_cadence)
      .u64(static_cast<std::uint64_t>(reporting_granularity))
      .u64(static_cast<std::uint64_t>(verification_policy.mode))
      .u64(verification_policy.escrow_trigger ? 1 : 0)
      .u64(human_required ? 1 : 0);
  w.u64(required_certifications.size());
  for (const auto& c : required_certifications) w.str(c);
  return w.digest();
}

// --------------------------------------------------------------------------
// Wire formats
// --------------------------------------------------------------------------

void to_json(nlohmann::json& j, const LeafAssignmentPlan& p) {
  j = nlohmann::json{{"task", p.node},
                     {"required_capabilities", p.required_capabilities},
                     {"candidate_verification_modes",
                      p.candidate_verification_modes},
                     {"refine_depth", p.refine_depth}};
}

void from_json(const nlohmann::json& j, LeafAssignmentPlan& p) {
  p = LeafAssignmentPlan{};
  j.at("task").get_to(p.node);
  j.at("required_capabilities").get_to(p.required_capabilities);
  j.at("candidate_verification_modes").get_to(p.candidate_verification_modes);
  p.refine_depth = j.value("refine_depth", 0u);
}

void to_json(nlohmann::json& j, const DecompositionProposal& p) {
  nlohmann::json dag = nlohmann::json::array();
  for (const auto& [from, to] : p.dag) dag.push_back({from, to});
  j = nlohmann::json{{"proposal_id", p.proposal_id},
                     {"root_task_id", p.root_task_id},
                     {"leaves", p.leaves},
                     {"dag", dag},
                     {"estimates",
                      {{"success_prob", p.estimates.success_prob},
                       {"total_cost", p.estimates.total_cost},
                       {"makespan", p.estimates.makespan}}}};
}

void from_json(const nlohmann::json& j, DecompositionProposal& p) {
  p = DecompositionProposal{};
  j.at("proposal_id").get_to(p.proposal_id);
  j.at("root_task_id").get_to(p.root_task_id);
  j.at("leaves").get_to(p.leaves);
  for (const auto& e : j.at("dag")) {
    p.dag.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  }
  const auto& est = j.at("estimates");
  est.at("success_prob").get_to(p.estimates.success_prob);
  est.at("total_cost").get_to(p.estimates.total_cost);
  est.at("makespan").get_to(p.estimates.makespan);
}

void to_json(nlohmann::json& j, const TaskSpecification& s) {
  j = nlohmann::json{
      {"task_id", s.task_id},
      {"role", s.role},
      {"resource_boundaries",
       {{"spend_cap", s.spend_cap}, {"scope", s.resource_scope}}},
      {"reporting",
       {{"cadence", s.reporting_cadence},
        {"granularity", granularity_name(s.reporting_granularity)}}},
      {"required_certifications", s.required_certifications},
      {"verification_policy", s.verification_policy},
      {"human_required", s.human_required}};
}

void from_json(const nlohmann::json& j, TaskSpecification& s) {
  s = TaskSpecification{};
  j.at("task_id").get_to(s.task_id);
  s.role = j.value("role", "executor");
  const auto& rb = j.at("resource_boundaries");
  rb.at("spend_cap").get_to(s.spend_cap);
  rb.at("scope").get_to(s.resource_scope);
  const auto& rep = j.at("reporting");
  rep.at("cadence").get_to(s.reporting_cadence);
  auto g = granularity_from_name(rep.at("granularity").get<std::string>());
  if (!g) fail(Errc::config_error, "unknown granularity");
  s.reporting_granularity = *g;
  if (j.contains("required_certifications")) {
    j.at("required_certifications").get_to(s.required_certifications);
  }
  j.at("verification_policy").get_to(s.verification_policy);
  s.human_required = j.value("human_required", false);
  if (s.reporting_cadence < 1) {
    fail(Errc::config_error, "reporting cadence must be >= 1");
  }
}

}  // namespace delsim
