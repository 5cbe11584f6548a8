#include "delsim/coordination.hpp"

#include <algorithm>
#include <cmath>

namespace delsim {

const char* trigger_kind_name(TriggerKind k) noexcept {
  switch (k) {
    case TriggerKind::SpecChange: return "SpecChange";
    case TriggerKind::Cancellation: return "Cancellation";
    case TriggerKind::ResourceShift: return "ResourceShift";
    case TriggerKind::Preemption: return "Preemption";
    case TriggerKind::SecurityFlag: return "SecurityFlag";
    case TriggerKind::PerfDegradation: return "PerfDegradation";
    case TriggerKind::BudgetOverrun: return "BudgetOverrun";
    case TriggerKind::VerificationFailure: return "VerificationFailure";
    case TriggerKind::Unresponsive: return "Unresponsive";
  }
  return "?";
}

bool trigger_is_internal(TriggerKind k) noexcept {
  switch (k) {
    case TriggerKind::PerfDegradation:
    case TriggerKind::BudgetOverrun:
    case TriggerKind::VerificationFailure:
    case TriggerKind::Unresponsive:
      return true;
    default:
      return false;
  }
}

void Trigger::validate() const {
  if (trigger_is_internal(kind) && evidence.empty()) {
    fail(Errc::config_error, "internal triggers require evidence");
  }
}

const char* response_action_name(ResponseAction a) noexcept {
  switch (a) {
    case ResponseAction::AdjustParams: return "AdjustParams";
    case ResponseAction::ReDelegateSubtask: return "ReDelegateSubtask";
    case ResponseAction::ReDecompose: return "ReDecompose";
    case ResponseAction::Escalate: return "Escalate";
    case ResponseAction::Terminate: return "Terminate";
  }
  return "?";
}

std::vector<Trigger> detect(const ContractView& view,
                            const std::vector<ProgressEvent>& events,
                            const std::vector<Trigger>& environment_feed,
                            Tick now, const DetectConfig& config) {
  std::vector<Trigger> out;
  for (const Trigger& t : environment_feed) {
    if (t.task_id == view.task_id && t.tick <= now &&
        !trigger_is_internal(t.kind)) {
      out.push_back(t);
    }
  }

  Tick last_event_tick = view.start_tick;
  double latest_fraction = 0.0;
  double latest_spend = 0.0;
  std::string last_event_ref;
  for (const ProgressEvent& e : events) {
    if (e.tick > now) continue;
    last_event_tick = std::max(last_event_tick, e.tick);
    last_event_ref = std::string(event_kind_name(e.kind)) + "@" +
                     std::to_string(e.tick);
    if (e.payload.contains("fraction")) {
      latest_fraction =
          std::max(latest_fraction, e.payload["fraction"].get<double>());
    }
    if (e.payload.contains("spend")) {
      latest_spend = std::max(latest_spend, e.payload["spend"].get<double>());
    }
  }

  if (latest_spend > config.budget_units) {
    Trigger t{TriggerKind::BudgetOverrun, view.task_id,
              {"spend=" + std::to_string(latest_spend)}, now};
    t.severity = latest_spend / std::max(1.0, config.budget_units) - 1.0;
    out.push_back(t);
  }

  const Tick elapsed = now > view.start_tick ? now - view.start_tick : 0;
  if (elapsed >= config.grace && latest_fraction < 1.0) {
    const double expected = std::min(
        1.0, static_cast<double>(elapsed) /
                 static_cast<double>(std::max<Tick>(1, view.duration_est)));
    if (latest_fraction < config.slo_fraction * expected) {
      Trigger t{TriggerKind::PerfDegradation, view.task_id,
                {"progress=" + std::to_string(latest_fraction)}, now};
      t.severity = expected > 0.0 ? 1.0 - latest_fraction / expected : 1.0;
      out.push_back(t);
    }
  }

  const Tick gap_limit = 2 * view.cadence;
  if (now > last_event_tick + gap_limit) {
    Trigger t{TriggerKind::Unresponsive, view.task_id,
              {last_event_ref.empty() ? "no_events" : last_event_ref},
              last_event_tick + gap_limit + 1};
    out.push_back(t);
  }
  for (const Trigger& t : out) t.validate();
  return out;
}

ResponsePlan select_response(const Trigger& trigger,
                             const TaskCharacteristics& characteristics,
                             bool alternatives_available, bool backup_set,
                             const AuthorityGrant& grant,
                             const ResponseThresholds& thresholds) {
  ResponsePlan plan;
  plan.task_id = trigger.task_id;

  if (trigger.kind == TriggerKind::SecurityFlag) {
    plan.action = ResponseAction::Terminate;
    plan.urgency = Urgency::immediate;
    return plan;
  }
  const bool irreversible_critical =
      characteristics.reversibility < thresholds.reversibility_min &&
      characteristics.criticality > thresholds.criticality_max;
  if (irreversible_critical) {
    plan.action = grant.human_approval_required ? ResponseAction::Escalate
                                                : ResponseAction::Terminate;
    plan.urgency = Urgency::immediate;
    return plan;
  }
  switch (trigger.kind) {
    case TriggerKind::Cancellation:
      plan.action = ResponseAction::Terminate;
      plan.urgency = Urgency::immediate;
      break;
    case TriggerKind::SpecChange:
      plan.action = ResponseAction::ReDecompose;
      break;
    case TriggerKind::ResourceShift:
      plan.action = ResponseAction::AdjustParams;
      break;
    case TriggerKind::Preemption:
      plan.action = ResponseAction::ReDelegateSubtask;
      plan.uses_backup = backup_set;
      break;
    case TriggerKind::PerfDegradation:
      if (trigger.severity < thresholds.severe_degradation) {
        plan.action = ResponseAction::AdjustParams;  // adjust before switching
      } else {
        plan.action = ResponseAction::ReDelegateSubtask;
        plan.uses_backup = backup_set;
      }
      break;
    case TriggerKind::BudgetOverrun:
      plan.action = ResponseAction::AdjustParams;
      break;
    case TriggerKind::VerificationFailure:
      plan.action = alternatives_available || backup_set
                        ? ResponseAction::ReDelegateSubtask
                        : ResponseAction::ReDecompose;
      plan.uses_backup = backup_set;
      break;
    case TriggerKind::Unresponsive:
      plan.action = ResponseAction::ReDelegateSubtask;
      plan.urgency = Urgency::immediate;
      plan.uses_backup = backup_set;
      break;
    case TriggerKind::SecurityFlag:
      break;  // handled above
  }
  return plan;
}

StabilityOutcome apply_stability(const StabilityPolicy& policy,
                                 const std::vector<Tick>& history, Tick now) {
  StabilityOutcome out;
  if (history.size() >= policy.max_redelegations) {
    out.decision = StabilityDecision::Abort;
    return out;
  }
  if (!history.empty() && now < history.back() + policy.rebid_cooldown) {
    out.decision = StabilityDecision::Defer;
    out.defer_until = history.back() + policy.rebid_cooldown;
    return out;
  }
  out.decision = StabilityDecision::Proceed;
  out.fee = policy.fee(static_cast<std::uint32_t>(history.size()) + 1);
  return out;
}

Digest32 partial_artifact_digest(const TaskNode& task, double fraction) {
  CanonicalWriter w;
  w.str(task.task_id)
      .u64(task.ground_truth)
      .str("partial")
      .u64(static_cast<std::uint64_t>(std::llround(fraction * 1e9)));
  return w.digest();
}

Bytes StateSnapshot::signing_bytes() const {
  CanonicalWriter w;
  w.str(task_id).f64(fraction).u64(tick).str(producer.id);
  w.u64(artifact_digests.size());
  for (const Digest32& d : artifact_digests) w.bytes(as_span(d));
  return w.data();
}

StateSnapshot checkpoint(const KeyRegistry& reg, const TaskNode& task,
                         const AgentId& executor, double fraction, Tick now) {
  StateSnapshot snap;
  snap.task_id = task.task_id;
  snap.fraction = std::clamp(fraction, 0.0, 1.0);
  snap.artifact_digests.push_back(partial_artifact_digest(task, snap.fraction));
  snap.tick = now;
  snap.producer = executor;
  snap.signature = reg.sign(executor, as_span(snap.signing_bytes()));
  return snap;
}

double resume(const KeyRegistry& reg, const TaskNode& task,
              const StateSnapshot& snapshot) {
  if (snapshot.task_id != task.task_id) {
    fail(Errc::corrupt_snapshot, "snapshot belongs to another task");
  }
  if (!reg.check(snapshot.producer, as_span(snapshot.signing_bytes()),
                 snapshot.signature)) {
    fail(Errc::corrupt_snapshot, "snapshot signature does not verify");
  }
  if (snapshot.artifact_digests.empty() ||
      snapshot.artifact_digests.back() !=
          partial_artifact_digest(task, snapshot.fraction)) {
    fail(Errc::corrupt_snapshot, "partial artifact digest mismatch");
  }
  return snapshot.fraction;
}

nlohmann::json StateSnapshot::to_json() const {
  nlohmann::json digests = nlohmann::json::array();
  for (const Digest32& d : artifact_digests) digests.push_back(to_hex(as_span(d)));
  return {{"task_id", task_id},
          {"fraction", fraction},
          {"artifact_digests", digests},
          {"tick", tick},
          {"producer", producer.id},
          {"signature", to_hex(as_span(signature))}};
}

StateSnapshot StateSnapshot::from_json(const nlohmann::json& j) {
  StateSnapshot s;
  j.at("task_id").get_to(s.task_id);
  j.at("fraction").get_to(s.fraction);
  for (const auto& hex : j.at("artifact_digests")) {
    Bytes raw = from_hex(hex.get<std::string>());
    Digest32 d{};
    if (raw.size() != d.size()) fail(Errc::corrupt_snapshot, "bad digest size");
    std::copy(raw.begin(), raw.end(), d.begin());
    s.artifact_digests.push_back(d);
  }
  j.at("tick").get_to(s.tick);
  s.producer.id = j.value("producer", "");
  Bytes sig = from_hex(j.at("signature").get<std::string>());
  if (sig.size() != s.signature.size()) {
    fail(Errc::corrupt_snapshot, "bad signature size");
  }
  std::copy(sig.begin(), sig.end(), s.signature.begin());
  return s;
}

void to_json(nlohmann::json& j, const Trigger& t) {
  j = nlohmann::json{{"kind", trigger_kind_name(t.kind)},
                     {"task_id", t.task_id},
                     {"evidence", t.evidence},
                     {"tick", t.tick},
                     {"severity", t.severity}};
}

void from_json(const nlohmann::json& j, Trigger& t) {
  t = Trigger{TriggerKind::SpecChange, "", {}, 0};
  const std::string kind = j.at("kind").get<std::string>();
  bool found = false;
  for (TriggerKind k :
       {TriggerKind::SpecChange, TriggerKind::Cancellation,
        TriggerKind::ResourceShift, TriggerKind::Preemption,
        TriggerKind::SecurityFlag, TriggerKind::PerfDegradation,
        TriggerKind::BudgetOverrun, TriggerKind::VerificationFailure,
        TriggerKind::Unresponsive}) {
    if (kind == trigger_kind_name(k)) {
      t.kind = k;
      found = true;
      break;
    }
  }
  if (!found) fail(Errc::config_error, "unknown trigger kind: " + kind);
  j.at("task_id").get_to(t.task_id);
  if (j.contains("evidence")) j.at("evidence").get_to(t.evidence);
  j.at("tick").get_to(t.tick);
  t.severity = j.value("severity", 1.0);
  t.validate();
}

}  // namespace delsim
