#include "delsim/task.hpp"

#include <algorithm>
#include <cmath>

#include "delsim/rng.hpp"

namespace delsim {

void TaskCharacteristics::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(complexity) || !in01(criticality) || !in01(uncertainty) ||
      !in01(verifiability) || !in01(reversibility) || !in01(contextuality) ||
      !in01(subjectivity)) {
    fail(Errc::config_error, "characteristic outside [0,1]");
  }
  if (duration_est < 1) fail(Errc::config_error, "duration_est must be >= 1");
  if (cost_est < 0) fail(Errc::config_error, "cost_est must be >= 0");
}

namespace {

void write_node(CanonicalWriter& w, const TaskNode& n) {
  const TaskCharacteristics& c = n.characteristics;
  w.str(n.task_id)
      .f64(c.complexity)
      .f64(c.criticality)
      .f64(c.uncertainty)
      .f64(c.verifiability)
      .f64(c.reversibility)
      .f64(c.contextuality)
      .f64(c.subjectivity)
      .u64(c.duration_est)
      .i64(c.cost_est);
  w.u64(c.resource_requirements.size());
  for (const auto& r : c.resource_requirements) w.str(r);
  w.u64(c.constraints.size());
  for (const auto& r : c.constraints) w.str(r);
  w.u64(static_cast<std::uint64_t>(n.ordering));
  w.u64(n.ground_truth);
  w.u64(n.human_required ? 1 : 0);
  w.u64(n.children.size());
  for (const TaskNode& child : n.children) write_node(w, child);
}

TaskNode generate_node(DetRng& rng, const GenProfile& p, const std::string& id,
                       std::uint32_t depth, std::uint32_t branching,
                       double criticality_cap) {
  TaskNode node;
  node.task_id = id;
  TaskCharacteristics& c = node.characteristics;
  c.complexity = rng.uniform(p.complexity_min, p.complexity_max);
  // Parent criticality bounds every child's (invariant on the tree).
  c.criticality =
      std::min(criticality_cap, rng.uniform(p.criticality_min, p.criticality_max));
  c.uncertainty = rng.uniform(p.uncertainty_min, p.uncertainty_max);
  c.verifiability = rng.uniform(p.verifiability_min, p.verifiability_max);
  c.reversibility = rng.uniform(p.reversibility_min, p.reversibility_max);
  c.contextuality = rng.uniform(p.contextuality_min, p.contextuality_max);
  c.subjectivity = rng.uniform(p.subjectivity_min, p.subjectivity_max);
  c.duration_est =
      p.duration_min + rng.below(p.duration_max - p.duration_min + 1);
  c.cost_est = p.cost_min + static_cast<Amount>(rng.below(
                                static_cast<std::uint64_t>(p.cost_max - p.cost_min + 1)));
  if (!p.capability_pool.empty()) {
    c.resource_requirements.insert(
        p.capability_pool[rng.below(p.capability_pool.size())]);
  }
  node.ordering = rng.coin(0.5) ? Ordering::parallel : Ordering::sequential;
  node.ground_truth = rng.next_u64();
  if (depth > 0) {
    for (std::uint32_t i = 0; i < branching; ++i) {
      node.children.push_back(generate_node(rng, p, id + "." + std::to_string(i),
                                            depth - 1, branching,
                                            c.criticality));
    }
  }
  return node;
}

}  // namespace

Digest32 TaskNode::structural_digest() const {
  CanonicalWriter w;
  write_node(w, *this);
  return w.digest();
}

TaskNode generate_task(std::uint64_t seed, std::uint32_t depth,
                       std::uint32_t branching, const GenProfile& profile) {
  if (branching < 1) fail(Errc::config_error, "branching must be >= 1");
  DetRng rng(DetRng::derive(seed, "task-gen"));
  return generate_node(rng, profile, "t" + std::to_string(seed), depth,
                       branching, 1.0);
}

namespace {

// Corruption is carried in fixed point so content bytes are exact.
constexpr double kCorruptionScale = 1e9;

Bytes artifact_content(const std::string& task_id, std::uint64_t ground_truth,
                       double corruption) {
  CanonicalWriter w;
  w.str(task_id).u64(ground_truth).u64(
      static_cast<std::uint64_t>(std::llround(corruption * kCorruptionScale)));
  return w.data();
}

}  // namespace

Digest32 expected_digest(const TaskNode& task) {
  return sha256(as_span(artifact_content(task.task_id, task.ground_truth, 0.0)));
}

Artifact make_artifact(const TaskNode& task, const AgentId& producer,
                       double corruption) {
  Artifact a;
  a.task_id = task.task_id;
  a.producer = producer;
  a.content = artifact_content(task.task_id, task.ground_truth, corruption);
  a.content_digest = sha256(as_span(a.content));
  a.quality_hint = 1.0;  // producers always claim success
  return a;
}

double degradation(double corruption) {
  double d = std::max(0.0, 1.0 - corruption);
  return d * d;
}

double oracle_evaluate(const TaskNode& task, const Artifact& artifact) {
  if (artifact.task_id != task.task_id) {
    fail(Errc::wrong_task, "artifact for " + artifact.task_id +
                               " scored against " + task.task_id);
  }
  if (sha256(as_span(artifact.content)) != artifact.content_digest) {
    return 0.0;  // digest does not commit to the content: tampered
  }
  // content = (task_id, ground_truth, corruption) in canonical form.
  const Bytes& c = artifact.content;
  Bytes honest_prefix;
  {
    CanonicalWriter w;
    w.str(task.task_id).u64(task.ground_truth);
    honest_prefix = w.data();
  }
  if (c.size() != honest_prefix.size() + 8 ||
      !std::equal(honest_prefix.begin(), honest_prefix.end(), c.begin())) {
    return 0.0;  // wrong ground truth claimed
  }
  std::uint64_t fixed = 0;
  for (std::size_t i = honest_prefix.size(); i < c.size(); ++i) {
    fixed = (fixed << 8) | c[i];
  }
  return degradation(static_cast<double>(fixed) / kCorruptionScale);
}

FloorDecision complexity_floor(const TaskNode& task, Amount overhead,
                               const FloorConfig& config) {
  if (overhead < 0) fail(Errc::config_error, "overhead must be >= 0");
  const TaskCharacteristics& c = task.characteristics;
  const bool direct =
      c.criticality <= config.criticality_max &&
      c.uncertainty <= config.uncertainty_max &&
      c.duration_est <= config.duration_max &&
      static_cast<double>(overhead) >=
          config.overhead_ratio * static_cast<double>(c.cost_est);
  return direct ? FloorDecision::ExecuteDirectly : FloorDecision::Delegate;
}

// --------------------------------------------------------------------------
// JSON fixtures
// --------------------------------------------------------------------------

void to_json(nlohmann::json& j, const TaskCharacteristics& c) {
  j = nlohmann::json{{"complexity", c.complexity},
                     {"criticality", c.criticality},
                     {"uncertainty", c.uncertainty},
                     {"verifiability", c.verifiability},
                     {"reversibility", c.reversibility},
                     {"contextuality", c.contextuality},
                     {"subjectivity", c.subjectivity},
                     {"duration_est", c.duration_est},
                     {"cost_est", c.cost_est},
                     {"resource_requirements", c.resource_requirements},
                     {"constraints", c.constraints}};
}

void from_json(const nlohmann::json& j, TaskCharacteristics& c) {
  c = TaskCharacteristics{};
  j.at("complexity").get_to(c.complexity);
  j.at("criticality").get_to(c.criticality);
  j.at("uncertainty").get_to(c.uncertainty);
  j.at("verifiability").get_to(c.verifiability);
  j.at("reversibility").get_to(c.reversibility);
  j.at("contextuality").get_to(c.contextuality);
  j.at("subjectivity").get_to(c.subjectivity);
  j.at("duration_est").get_to(c.duration_est);
  j.at("cost_est").get_to(c.cost_est);
  if (j.contains("resource_requirements")) {
    j.at("resource_requirements").get_to(c.resource_requirements);
  }
  if (j.contains("constraints")) j.at("constraints").get_to(c.constraints);
  c.validate();
}

void to_json(nlohmann::json& j, const TaskNode& n) {
  j = nlohmann::json{{"task_id", n.task_id},
                     {"characteristics", n.characteristics},
                     {"ordering", n.ordering == Ordering::parallel
                                      ? "parallel"
                                      : "sequential"},
                     {"ground_truth", n.ground_truth},
                     {"human_required", n.human_required},
                     {"children", n.children}};
}

void from_json(const nlohmann::json& j, TaskNode& n) {
  n = TaskNode{};
  j.at("task_id").get_to(n.task_id);
  j.at("characteristics").get_to(n.characteristics);
  const std::string ord = j.value("ordering", "parallel");
  if (ord != "parallel" && ord != "sequential") {
    fail(Errc::config_error, "ordering must be parallel|sequential");
  }
  n.ordering = ord == "parallel" ? Ordering::parallel : Ordering::sequential;
  n.ground_truth = j.value("ground_truth", std::uint64_t{0});
  n.human_required = j.value("human_required", false);
  if (j.contains("children")) j.at("children").get_to(n.children);
}

}  // namespace delsim
