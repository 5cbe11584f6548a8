#include "delsim/monitoring.hpp"

#include <algorithm>

namespace delsim {

const char* granularity_name(Granularity g) noexcept {
  switch (g) {
    case Granularity::L0: return "L0_IS_OPERATIONAL";
    case Granularity::L1: return "L1_HIGH_LEVEL_PLAN_UPDATES";
    case Granularity::L2: return "L2_COT_TRACE";
    case Granularity::L3: return "L3_FULL_STATE";
  }
  return "?";
}

std::optional<Granularity> granularity_from_name(std::string_view name) {
  for (Granularity g : {Granularity::L0, Granularity::L1, Granularity::L2,
                        Granularity::L3}) {
    if (name == granularity_name(g)) return g;
  }
  // Short aliases accepted on the CLI.
  if (name == "L0") return Granularity::L0;
  if (name == "L1") return Granularity::L1;
  if (name == "L2") return Granularity::L2;
  if (name == "L3") return Granularity::L3;
  return std::nullopt;
}

void MonitoringPlan::validate() const {
  if (cadence < 1) fail(Errc::config_error, "cadence must be >= 1 tick");
}

const char* event_kind_name(EventKind k) noexcept {
  switch (k) {
    case EventKind::TASK_STARTED: return "TASK_STARTED";
    case EventKind::CHECKPOINT_REACHED: return "CHECKPOINT_REACHED";
    case EventKind::RESOURCE_WARNING: return "RESOURCE_WARNING";
    case EventKind::TASK_COMPLETED: return "TASK_COMPLETED";
    case EventKind::TASK_BLOCKED: return "TASK_BLOCKED";
  }
  return "?";
}

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  for (EventKind k : {EventKind::TASK_STARTED, EventKind::CHECKPOINT_REACHED,
                      EventKind::RESOURCE_WARNING, EventKind::TASK_COMPLETED,
                      EventKind::TASK_BLOCKED}) {
    if (name == event_kind_name(k)) return k;
  }
  return std::nullopt;
}

Bytes ProgressEvent::signing_bytes() const {
  CanonicalWriter w;
  w.u64(tick)
      .str(task_id)
      .str(emitter.id)
      .u64(static_cast<std::uint64_t>(kind))
      .u64(static_cast<std::uint64_t>(level))
      .str(payload.dump());
  return w.data();
}

ProgressEvent ProgressEvent::make(const KeyRegistry& reg, Tick tick,
                                  const std::string& task_id,
                                  const AgentId& emitter, EventKind kind,
                                  Granularity level, nlohmann::json payload) {
  ProgressEvent e;
  e.tick = tick;
  e.task_id = task_id;
  e.emitter = emitter;
  e.kind = kind;
  e.level = level;
  e.payload = std::move(payload);
  e.signature = reg.sign(emitter, as_span(e.signing_bytes()));
  return e;
}

bool ProgressEvent::verify(const KeyRegistry& reg) const {
  return reg.check(emitter, as_span(signing_bytes()), signature);
}

void StatusBoard::register_task(const std::string& task_id) {
  streams_.try_emplace(task_id);
}

void StatusBoard::record(const ProgressEvent& event) {
  streams_[event.task_id].push_back(event);
}

const std::vector<ProgressEvent>& StatusBoard::stream(
    const std::string& task_id) const {
  auto it = streams_.find(task_id);
  if (it == streams_.end()) fail(Errc::not_found, "unknown task: " + task_id);
  return it->second;
}

StatusSnapshot StatusBoard::poll_status(const std::string& task_id) const {
  const auto& events = stream(task_id);
  StatusSnapshot snap;
  snap.phase = "registered";
  for (const ProgressEvent& e : events) {
    snap.last_event_tick = e.tick;
    switch (e.kind) {
      case EventKind::TASK_STARTED:
        snap.phase = "started";
        break;
      case EventKind::CHECKPOINT_REACHED:
        snap.phase = "started";
        if (e.payload.contains("fraction")) {
          snap.progress =
              std::max(snap.progress, e.payload["fraction"].get<double>());
        }
        break;
      case EventKind::RESOURCE_WARNING:
        break;
      case EventKind::TASK_BLOCKED:
        snap.phase = "blocked";
        break;
      case EventKind::TASK_COMPLETED:
        snap.phase = "completed";
        snap.progress = 1.0;
        break;
    }
  }
  return snap;
}

nlohmann::json StatusSnapshot::to_json() const {
  return {{"phase", phase},
          {"last_event_tick", last_event_tick},
          {"progress", progress}};
}

std::vector<ProgressEvent> filter_stream(const std::vector<ProgressEvent>& events,
                                         Granularity negotiated) {
  std::vector<ProgressEvent> out;
  for (const ProgressEvent& e : events) {
    if (static_cast<std::uint8_t>(e.level) <=
        static_cast<std::uint8_t>(negotiated)) {
      out.push_back(e);
    }
  }
  return out;
}

std::vector<ProgressEvent> observe_indirect(const EnvironmentSnapshot& before,
                                            const EnvironmentSnapshot& after,
                                            Tick now, double confidence) {
  std::vector<ProgressEvent> out;
  for (const auto& [task_id, digests] : after) {
    const std::set<std::string>* prior = nullptr;
    if (auto it = before.find(task_id); it != before.end()) prior = &it->second;
    for (const std::string& d : digests) {
      if (prior != nullptr && prior->count(d) > 0) continue;
      ProgressEvent e;
      e.tick = now;
      e.task_id = task_id;
      e.kind = EventKind::CHECKPOINT_REACHED;
      e.level = Granularity::L0;
      e.payload = {{"inferred", true},
                   {"confidence", confidence},
                   {"artifact_digest", d}};
      out.push_back(e);  // unsigned: inference, not a delegatee statement
    }
  }
  return out;
}

Bytes AttestationSummary::canonical_bytes() const {
  CanonicalWriter w;
  w.u64(completed ? 1 : 0).f64(quality).u64(resources);
  return w.data();
}

Bytes AttestationReport::signing_bytes() const {
  CanonicalWriter w;
  w.str(attester.id)
      .str(subject.id)
      .str(subtask_id)
      .bytes(as_span(summary.canonical_bytes()))
      .bytes(as_span(subject_summary.canonical_bytes()))
      .bytes(as_span(subject_signature))
      .str(embedded_in);
  return w.data();
}

AttestationReport attest(const KeyRegistry& reg, const AgentId& attester,
                         const AgentId& subject, const std::string& subtask_id,
                         const AttestationSummary& measured,
                         const std::string& embedded_in) {
  AttestationReport r;
  r.attester = attester;
  r.subject = subject;
  r.subtask_id = subtask_id;
  r.summary = measured;
  r.subject_summary = measured;
  {
    CanonicalWriter w;
    w.str(subtask_id).bytes(as_span(r.subject_summary.canonical_bytes()));
    r.subject_signature = reg.sign(subject, as_span(w.data()));
  }
  r.embedded_in = embedded_in;
  r.signature = reg.sign(attester, as_span(r.signing_bytes()));
  return r;
}

const char* chain_failure_name(ChainFailure reason) noexcept {
  switch (reason) {
    case ChainFailure::bad_signature: return "bad_signature";
    case ChainFailure::tampered_subject_report: return "tampered_subject_report";
    case ChainFailure::summary_mismatch: return "summary_mismatch";
    case ChainFailure::not_monitor: return "not_monitor";
    case ChainFailure::foreign_subtask: return "foreign_subtask";
    case ChainFailure::uncertified_monitor: return "uncertified_monitor";
  }
  return "?";
}

ChainCheck verify_attestation_chain(const KeyRegistry& reg,
                                    const std::vector<AttestationReport>& chain,
                                    const ChainContext& ctx) {
  std::string parent_task = ctx.root_task_id;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const AttestationReport& r = chain[i];
    auto invalid = [&](ChainFailure reason) {
      return ChainCheck{false, i, reason};
    };
    if (!reg.check(r.attester, as_span(r.signing_bytes()), r.signature)) {
      return invalid(ChainFailure::bad_signature);
    }
    {
      CanonicalWriter w;
      w.str(r.subtask_id).bytes(as_span(r.subject_summary.canonical_bytes()));
      if (!reg.check(r.subject, as_span(w.data()), r.subject_signature)) {
        return invalid(ChainFailure::tampered_subject_report);
      }
    }
    if (!(r.summary == r.subject_summary)) {
      return invalid(ChainFailure::summary_mismatch);
    }
    if (ctx.is_monitor &&
        !ctx.is_monitor(r.attester.id, r.subject.id, r.subtask_id)) {
      return invalid(ChainFailure::not_monitor);
    }
    if (!parent_task.empty() && ctx.is_subtask_of &&
        !ctx.is_subtask_of(parent_task, r.subtask_id)) {
      return invalid(ChainFailure::foreign_subtask);
    }
    if (ctx.require_certification && ctx.is_certified &&
        !ctx.is_certified(r.attester.id)) {
      return invalid(ChainFailure::uncertified_monitor);
    }
    parent_task = r.subtask_id;
  }
  return ChainCheck{};
}

void to_json(nlohmann::json& j, const ProgressEvent& e) {
  j = nlohmann::json{{"tick", e.tick},
                     {"task_id", e.task_id},
                     {"emitter", e.emitter.id},
                     {"kind", event_kind_name(e.kind)},
                     {"level", granularity_name(e.level)},
                     {"payload", e.payload},
                     {"signature", to_hex(as_span(e.signature))}};
}

void from_json(const nlohmann::json& j, ProgressEvent& e) {
  e = ProgressEvent{};
  j.at("tick").get_to(e.tick);
  j.at("task_id").get_to(e.task_id);
  e.emitter.id = j.at("emitter").get<std::string>();
  auto kind = event_kind_from_name(j.at("kind").get<std::string>());
  if (!kind) fail(Errc::config_error, "unknown event kind");
  e.kind = *kind;
  auto level = granularity_from_name(j.at("level").get<std::string>());
  if (!level) fail(Errc::config_error, "unknown granularity level");
  e.level = *level;
  e.payload = j.value("payload", nlohmann::json::object());
  if (j.contains("signature")) {
    Bytes sig = from_hex(j.at("signature").get<std::string>());
    if (sig.size() == e.signature.size()) {
      std::copy(sig.begin(), sig.end(), e.signature.begin());
    }
  }
}

}  // namespace delsim
