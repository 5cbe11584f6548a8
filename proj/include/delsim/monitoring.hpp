#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delsim/identity.hpp"
#include "delsim/task.hpp"

namespace delsim {

enum class MonitorTarget : std::uint8_t { outcome, process };
enum class Observability : std::uint8_t { direct, indirect };
enum class Transparency : std::uint8_t { black_box, white_box };
enum class PrivacyMode : std::uint8_t { full, cryptographic };
enum class Topology : std::uint8_t { direct, transitive };

// Negotiated payload bands, most restrictive first.
enum class Granularity : std::uint8_t { L0 = 0, L1 = 1, L2 = 2, L3 = 3 };

const char* granularity_name(Granularity g) noexcept;
std::optional<Granularity> granularity_from_name(std::string_view name);

struct MonitoringPlan {
  MonitorTarget target = MonitorTarget::outcome;
  Observability observability = Observability::direct;
  Transparency transparency = Transparency::black_box;
  PrivacyMode privacy = PrivacyMode::full;
  Topology topology = Topology::direct;
  Tick cadence = 5;  // >= 1
  Granularity granularity = Granularity::L1;

  void validate() const;
};

enum class EventKind : std::uint8_t {
  TASK_STARTED,
  CHECKPOINT_REACHED,
  RESOURCE_WARNING,
  TASK_COMPLETED,
  TASK_BLOCKED,
};

const char* event_kind_name(EventKind k) noexcept;
std::optional<EventKind> event_kind_from_name(std::string_view name);

struct ProgressEvent {
  Tick tick = 0;
  std::string task_id;
  AgentId emitter;
  EventKind kind = EventKind::TASK_STARTED;
  Granularity level = Granularity::L0;
  nlohmann::json payload;
  Digest32 signature{};

  Bytes signing_bytes() const;
  static ProgressEvent make(const KeyRegistry& reg, Tick tick,
                            const std::string& task_id, const AgentId& emitter,
                            EventKind kind, Granularity level,
                            nlohmann::json payload);
  bool verify(const KeyRegistry& reg) const;
};

struct StatusSnapshot {
  std::string phase;  // registered | started | blocked | completed
  Tick last_event_tick = 0;
  double progress = 0.0;

  nlohmann::json to_json() const;
};

// Per-task event streams; single writer per task, pure reads.
class StatusBoard {
 public:
  void register_task(const std::string& task_id);
  bool known(const std::string& task_id) const {
    return streams_.count(task_id) > 0;
  }
  void record(const ProgressEvent& event);

  // GET /task/{id}/status shape. Throws NotFound for unknown tasks.
  StatusSnapshot poll_status(const std::string& task_id) const;

  const std::vector<ProgressEvent>& stream(const std::string& task_id) const;

 private:
  std::map<std::string, std::vector<ProgressEvent>> streams_;
};

// Keeps exactly the events whose payload band is within the negotiated level,
// in the original order.
std::vector<ProgressEvent> filter_stream(const std::vector<ProgressEvent>& events,
                                         Granularity negotiated);

// Snapshot of a shared artifact store for indirect observation: task id ->
// digests present.
using EnvironmentSnapshot = std::map<std::string, std::set<std::string>>;

// Diffs two snapshots and infers CHECKPOINT_REACHED events for new digests.
// Inferred events carry {"inferred": true, "confidence": <weight>}.
std::vector<ProgressEvent> observe_indirect(const EnvironmentSnapshot& before,
                                            const EnvironmentSnapshot& after,
                                            Tick now, double confidence);

struct AttestationSummary {
  bool completed = false;
  double quality = 0.0;        // [0,1]
  std::uint64_t resources = 0; // units consumed

  Bytes canonical_bytes() const;
  friend bool operator==(const AttestationSummary&, const AttestationSummary&) = default;
};

// B's signed report vouching for sub-delegatee C. The subject's own signed
// completion report is embedded so a forged summary is detectable either as a
// signature failure on the embedded report or as a summary mismatch.
struct AttestationReport {
  AgentId attester;  // B
  AgentId subject;   // C
  std::string subtask_id;
  AttestationSummary summary;
  AttestationSummary subject_summary;  // as signed by the subject
  Digest32 subject_signature{};        // subject's tag over subject_summary
  Digest32 signature{};                // attester's tag over the whole report
  std::string embedded_in;             // id of the parent status update

  Bytes signing_bytes() const;
};

// Builds the subject's self-report plus the attester's counter-signed
// attestation in one step.
AttestationReport attest(const KeyRegistry& reg, const AgentId& attester,
                         const AgentId& subject, const std::string& subtask_id,
                         const AttestationSummary& measured,
                         const std::string& embedded_in);

enum class ChainFailure : std::uint8_t {
  bad_signature,
  tampered_subject_report,
  summary_mismatch,
  not_monitor,
  foreign_subtask,
  uncertified_monitor,
};

const char* chain_failure_name(ChainFailure reason) noexcept;

struct ChainCheck {
  bool valid = true;
  std::optional<std::size_t> failing_link;  // index into the chain
  std::optional<ChainFailure> reason;
};

// Context the verifier consults: contractual monitoring relationships,
// parent/child task structure, and certification requirements.
struct ChainContext {
  // (monitor, subject, subtask) triples with an active monitoring contract.
  std::function<bool(const std::string& monitor, const std::string& subject,
                     const std::string& subtask_id)>
      is_monitor;
  // Whether `child` is a subtask of `parent` in the decomposition.
  std::function<bool(const std::string& parent, const std::string& child)>
      is_subtask_of;
  // Certified-monitor check; only consulted when require_certification.
  std::function<bool(const std::string& agent)> is_certified;
  bool require_certification = false;
  // Subtask the chain hangs off (the root delegatee's task).
  std::string root_task_id;
};

// Verifies a chain ordered root-ward: chain[0] is B's report about C, chain[1]
// is C's report about D, and so on. Pinpoints the first failing link.
ChainCheck verify_attestation_chain(const KeyRegistry& reg,
                                    const std::vector<AttestationReport>& chain,
                                    const ChainContext& ctx);

void to_json(nlohmann::json& j, const ProgressEvent& e);
void from_json(const nlohmann::json& j, ProgressEvent& e);

}  // namespace delsim
