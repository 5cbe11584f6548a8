#include "delsim/reputation.hpp"

#include <algorithm>
#include <ostream>

#include "delsim/monitoring.hpp"

namespace delsim {

std::size_t ReputationLedger::record(VerifiableCredential credential,
                                     OutcomeMeta meta) {
  if (registry_ != nullptr && !credential.verify(*registry_)) {
    fail(Errc::invalid_credential, "credential does not verify");
  }
  entries_.push_back({std::move(credential), meta, std::nullopt});
  return entries_.size() - 1;
}

std::size_t ReputationLedger::retroactive_update(std::size_t original_index,
                                                 OutcomeMeta corrected) {
  if (original_index >= entries_.size() ||
      entries_[original_index].correction_of.has_value()) {
    fail(Errc::not_found, "no such original entry");
  }
  ReputationEntry entry;
  entry.credential = entries_[original_index].credential;
  entry.meta = corrected;
  entry.correction_of = original_index;
  entries_.push_back(std::move(entry));
  return entries_.size() - 1;
}

namespace {

struct Fold {
  double completion, transparency, safety;
};

}  // namespace

ReputationScore ReputationLedger::score(const std::string& agent,
                                        Tick now) const {
  // Effective outcome per original entry: the last correction wins, replayed
  // at the original position.
  std::vector<std::size_t> originals;
  std::map<std::size_t, const OutcomeMeta*> effective;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const ReputationEntry& e = entries_[i];
    if (e.credential.subject.id != agent) continue;
    if (e.meta.tick > now) continue;
    if (e.correction_of) {
      effective[*e.correction_of] = &e.meta;
    } else {
      originals.push_back(i);
      effective.emplace(i, &e.meta);
    }
  }
  Fold s{config_.prior, config_.prior, config_.prior};
  std::uint64_t count = 0;
  for (std::size_t idx : originals) {
    const OutcomeMeta& m = *effective.at(idx);
    const double weight =
        config_.complexity_weighting ? 0.5 + 0.5 * m.task_complexity : 1.0;
    const double alpha = (1.0 - config_.damping) * weight;
    s.completion = (1.0 - alpha) * s.completion + alpha * (m.success ? 1.0 : 0.0);
    s.transparency = (1.0 - alpha) * s.transparency + alpha * m.transparency_obs;
    s.safety = (1.0 - alpha) * s.safety + alpha * m.safety_obs;
    ++count;
  }
  ReputationScore out;
  out.completion = s.completion;
  out.transparency = s.transparency;
  out.safety = s.safety;
  out.composite = config_.completion_weight * s.completion +
                  config_.transparency_weight * s.transparency +
                  config_.safety_weight * s.safety;
  out.sample_count = count;
  return out;
}

ReputationScore ReputationLedger::score_latest(const std::string& agent) const {
  return score(agent, ~Tick{0});
}

std::vector<std::pair<Tick, double>> ReputationLedger::trajectory(
    const std::string& agent) const {
  std::vector<std::pair<Tick, double>> out;
  for (const ReputationEntry& e : entries_) {
    if (e.credential.subject.id != agent) continue;
    out.emplace_back(e.meta.tick, score(agent, e.meta.tick).composite);
  }
  return out;
}

void ReputationLedger::save(std::ostream& out) const {
  for (const ReputationEntry& e : entries_) {
    nlohmann::json j{{"issuer", e.credential.issuer.id},
                     {"subject", e.credential.subject.id},
                     {"kind", e.credential.claim.kind},
                     {"task_id", e.credential.claim.task_id},
                     {"date", e.credential.claim.date},
                     {"quality", e.credential.claim.quality},
                     {"success", e.meta.success},
                     {"resources_vs_budget", e.meta.resources_vs_budget},
                     {"deadline_met", e.meta.deadline_met},
                     {"constraints_met", e.meta.constraints_met},
                     {"transparency_obs", e.meta.transparency_obs},
                     {"safety_obs", e.meta.safety_obs},
                     {"tick", e.meta.tick},
                     {"task_complexity", e.meta.task_complexity}};
    if (e.correction_of) j["correction_of"] = *e.correction_of;
    out << j.dump() << "\n";
  }
}

double TrustModel::threshold(double criticality) const {
  return std::clamp(base + slope * criticality, 0.0, 1.0);
}

const char* autonomy_name(Autonomy a) noexcept {
  switch (a) {
    case Autonomy::atomic: return "atomic";
    case Autonomy::bounded: return "bounded";
    case Autonomy::open_ended: return "open_ended";
  }
  return "?";
}

AuthorityGrant graduated_authority(const ReputationScore& score,
                                   double criticality,
                                   const GrantTable& table) {
  AuthorityGrant grant;
  if (score.composite < table.score_low) {
    grant.autonomy = Autonomy::atomic;
    grant.spend_cap_multiplier = 0.1;
    grant.monitoring_floor = Granularity::L2;
  } else if (score.composite < table.score_high) {
    grant.autonomy = Autonomy::bounded;
    grant.spend_cap_multiplier = 0.5;
    grant.monitoring_floor = Granularity::L1;
  } else {
    grant.autonomy = Autonomy::open_ended;
    grant.spend_cap_multiplier = 1.0;
    grant.monitoring_floor = Granularity::L0;
  }
  if (criticality >= table.criticality_high) {
    // High-stakes tasks are gated on human approval regardless of score, and
    // never drop below process-aware monitoring.
    grant.human_approval_required = true;
    if (grant.monitoring_floor == Granularity::L0) {
      grant.monitoring_floor = Granularity::L1;
    }
  }
  return grant;
}

BreakerTrip circuit_breaker(const ReputationLedger& ledger,
                            const std::string& agent,
                            const BreakerConfig& config) {
  const auto points = ledger.trajectory(agent);
  BreakerTrip trip;
  for (std::size_t j = 0; j < points.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (points[j].first - points[i].first > config.window) continue;
      const double drop = points[i].second - points[j].second;
      if (drop >= config.drop) {
        trip.tripped = true;
        trip.at_tick = points[j].first;
        trip.drop = drop;
        return trip;
      }
    }
  }
  return trip;
}

}  // namespace delsim
