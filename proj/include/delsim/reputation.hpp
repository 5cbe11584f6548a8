#pragma once

#include <optional>
#include <string>
#include <vector>

#include "delsim/identity.hpp"
#include "delsim/monitoring.hpp"

namespace delsim {

struct OutcomeMeta {
  bool success = false;
  double quality = 0.0;
  double resources_vs_budget = 1.0;  // consumed / budgeted
  bool deadline_met = true;
  bool constraints_met = true;
  double transparency_obs = 1.0;  // fraction of scheduled events delivered
  double safety_obs = 1.0;        // 1 - permission-deny rate
  Tick tick = 0;
  double task_complexity = 1.0;   // anti-gaming weight input
};

struct ReputationEntry {
  VerifiableCredential credential;
  OutcomeMeta meta;
  // Retroactive corrections are new entries referencing the original; the
  // original entry is never mutated.
  std::optional<std::size_t> correction_of;
};

struct ReputationConfig {
  double damping = 0.8;  // delta: s <- delta*s + (1-delta)*outcome
  double prior = 0.5;    // p0 for fresh identities
  // Anti-gaming: entries weigh by 0.5 + 0.5*complexity so easy tasks move
  // the score less.
  bool complexity_weighting = true;
  double completion_weight = 0.6;
  double transparency_weight = 0.2;
  double safety_weight = 0.2;
};

struct ReputationScore {
  double completion = 0.5;
  double transparency = 0.5;
  double safety = 0.5;
  double composite = 0.5;
  std::uint64_t sample_count = 0;
};

class ReputationLedger {
 public:
  explicit ReputationLedger(ReputationConfig config = {},
                            const KeyRegistry* registry = nullptr)
      : config_(config), registry_(registry) {}

  // Appends a verified credential + outcome metadata. InvalidCredential when
  // the signature does not verify (registry-backed ledgers only).
  std::size_t record(VerifiableCredential credential, OutcomeMeta meta);

  // Appends a correction entry for an existing entry; scores replay the
  // corrected outcome at its original position in the fold.
  std::size_t retroactive_update(std::size_t original_index, OutcomeMeta corrected);

  // EWMA fold over the agent's effective history up to and including `now`.
  ReputationScore score(const std::string& agent, Tick now) const;

  ReputationScore score_latest(const std::string& agent) const;

  const std::vector<ReputationEntry>& entries() const { return entries_; }
  const ReputationConfig& config() const { return config_; }

  // Composite trajectory (tick, score-after-entry) for one agent.
  std::vector<std::pair<Tick, double>> trajectory(const std::string& agent) const;

  void save(std::ostream& out) const;

 private:
  ReputationConfig config_;
  const KeyRegistry* registry_;
  std::vector<ReputationEntry> entries_;
};

// Private, context-dependent admission threshold: non-decreasing in task
// criticality.
struct TrustModel {
  double base = 0.0;
  double slope = 0.5;
  std::string owner;

  double threshold(double criticality) const;
};

enum class Autonomy : std::uint8_t { atomic, bounded, open_ended };

const char* autonomy_name(Autonomy a) noexcept;

struct AuthorityGrant {
  Autonomy autonomy = Autonomy::atomic;
  double spend_cap_multiplier = 0.1;
  Granularity monitoring_floor = Granularity::L2;
  bool human_approval_required = false;
};

struct GrantTable {
  // Score band cut points: [0, low) -> low trust, [low, high) -> medium,
  // [high, 1] -> high trust.
  double score_low = 0.4;
  double score_high = 0.75;
  // Criticality band cut for mandatory human oversight.
  double criticality_high = 0.7;
  double criticality_mid = 0.3;
};

// Step-table lookup: higher score never yields a stricter grant at fixed
// criticality.
AuthorityGrant graduated_authority(const ReputationScore& score,
                                   double criticality,
                                   const GrantTable& table = {});

struct BreakerConfig {
  double drop = 0.25;  // minimum composite fall
  Tick window = 50;    // within this many ticks
};

struct BreakerTrip {
  bool tripped = false;
  Tick at_tick = 0;
  double drop = 0.0;
};

// Trips iff the composite fell by >= config.drop within config.window ticks.
BreakerTrip circuit_breaker(const ReputationLedger& ledger,
                            const std::string& agent,
                            const BreakerConfig& config);

}  // namespace delsim
