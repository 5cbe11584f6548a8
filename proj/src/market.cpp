#include "delsim/market.hpp"

#include <algorithm>
#include <cmath>

namespace delsim {

const char* privacy_guarantee_name(PrivacyGuarantee g) noexcept {
  switch (g) {
    case PrivacyGuarantee::none: return "none";
    case PrivacyGuarantee::tee_enclave: return "tee_enclave";
    case PrivacyGuarantee::crypto_proof: return "crypto_proof";
  }
  return "?";
}

std::optional<PrivacyGuarantee> privacy_guarantee_from_name(
    std::string_view name) {
  if (name == "none") return PrivacyGuarantee::none;
  if (name == "tee_enclave") return PrivacyGuarantee::tee_enclave;
  if (name == "crypto_proof") return PrivacyGuarantee::crypto_proof;
  return std::nullopt;
}

void TaskRFQ::validate(Tick now) const {
  if (deadline_for_bids <= now) {
    fail(Errc::config_error, "bid deadline must be in the future");
  }
  double sum = 0.0;
  for (const auto& [_, w] : preference_weights) {
    if (w < 0.0) fail(Errc::config_error, "weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(Errc::config_error, "weights must sum to 1");
  }
}

Bytes Bid::signing_bytes() const {
  CanonicalWriter w;
  w.str(agent_id)
      .i64(estimated_cost)
      .u64(estimated_duration)
      .u64(static_cast<std::uint64_t>(privacy_guarantee))
      .i64(reputation_bond)
      .u64(expiry);
  return w.data();
}

Bid Bid::make(const KeyRegistry& reg, const AgentId& agent, Amount cost,
              Tick duration, PrivacyGuarantee privacy, Amount bond,
              Tick expiry) {
  Bid b;
  b.agent_id = agent.id;
  b.estimated_cost = cost;
  b.estimated_duration = duration;
  b.privacy_guarantee = privacy;
  b.reputation_bond = bond;
  b.expiry = expiry;
  b.signature = reg.sign(agent, as_span(b.signing_bytes()));
  return b;
}

ObjectiveVector objectives_for(const Bid& bid, double reputation_composite) {
  ObjectiveVector v;
  v.cost = static_cast<double>(bid.estimated_cost);
  v.latency = static_cast<double>(bid.estimated_duration);
  v.risk = 1.0 - reputation_composite;
  switch (bid.privacy_guarantee) {
    case PrivacyGuarantee::none: v.privacy_penalty = 1.0; break;
    case PrivacyGuarantee::tee_enclave: v.privacy_penalty = 0.5; break;
    case PrivacyGuarantee::crypto_proof: v.privacy_penalty = 0.0; break;
  }
  return v;
}

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  const auto av = a.components();
  const auto bv = b.components();
  bool strictly = false;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] > bv[i]) return false;
    if (av[i] < bv[i]) strictly = true;
  }
  return strictly;
}

std::vector<ScoredBid> pareto_filter(const std::vector<ScoredBid>& bids) {
  // Lexicographic presort: any dominator of x precedes x, so each candidate
  // only needs checking against the front built so far.
  std::vector<const ScoredBid*> order;
  order.reserve(bids.size());
  for (const ScoredBid& b : bids) order.push_back(&b);
  std::sort(order.begin(), order.end(),
            [](const ScoredBid* a, const ScoredBid* b) {
              const auto av = a->objectives.components();
              const auto bv = b->objectives.components();
              if (av != bv) return av < bv;
              return a->bid.agent_id < b->bid.agent_id;
            });

  std::vector<const ScoredBid*> front;
  for (const ScoredBid* candidate : order) {
    bool dominated = std::any_of(front.begin(), front.end(),
                                 [&](const ScoredBid* kept) {
                                   return dominates(kept->objectives,
                                                    candidate->objectives);
                                 });
    if (!dominated) front.push_back(candidate);
  }
  std::sort(front.begin(), front.end(),
            [](const ScoredBid* a, const ScoredBid* b) {
              return a->bid.agent_id < b->bid.agent_id;
            });
  std::vector<ScoredBid> out;
  out.reserve(front.size());
  for (const ScoredBid* b : front) out.push_back(*b);
  return out;
}

SelectionOutcome select(const std::vector<ScoredBid>& nondominated,
                        const std::map<std::string, double>& weights,
                        const std::function<double(double)>& trust_threshold,
                        double criticality) {
  SelectionOutcome out;
  const double threshold = trust_threshold ? trust_threshold(criticality) : 0.0;

  std::vector<const ScoredBid*> survivors;
  for (const ScoredBid& b : nondominated) {
    if (b.reputation >= threshold) {
      survivors.push_back(&b);
    } else {
      out.losers.push_back(b.bid.agent_id);
    }
  }
  if (survivors.empty()) return out;  // NoMatch: every bond refunds

  // Per-RFQ normalization: each component divided by the max over the
  // survivor set (max 0 -> component 0).
  ObjectiveVector maxv;
  for (const ScoredBid* b : survivors) {
    maxv.cost = std::max(maxv.cost, b->objectives.cost);
    maxv.latency = std::max(maxv.latency, b->objectives.latency);
    maxv.risk = std::max(maxv.risk, b->objectives.risk);
    maxv.privacy_penalty =
        std::max(maxv.privacy_penalty, b->objectives.privacy_penalty);
  }
  auto norm = [](double v, double m) { return m > 0.0 ? v / m : 0.0; };
  auto weight = [&](const char* key) {
    auto it = weights.find(key);
    return it == weights.end() ? 0.0 : it->second;
  };
  auto score = [&](const ScoredBid* b) {
    return weight("cost") * norm(b->objectives.cost, maxv.cost) +
           weight("latency") * norm(b->objectives.latency, maxv.latency) +
           weight("risk") * norm(b->objectives.risk, maxv.risk) +
           weight("privacy") *
               norm(b->objectives.privacy_penalty, maxv.privacy_penalty);
  };

  const ScoredBid* best = nullptr;
  double best_score = 0.0;
  for (const ScoredBid* b : survivors) {
    double s = score(b);
    if (best == nullptr || s < best_score ||
        (s == best_score && (b->reputation > best->reputation ||
                             (b->reputation == best->reputation &&
                              b->bid.agent_id < best->bid.agent_id)))) {
      best = b;
      best_score = s;
    }
  }
  out.winner = *best;
  for (const ScoredBid* b : survivors) {
    if (b != best) out.losers.push_back(b->bid.agent_id);
  }
  return out;
}

Amount OverheadTable::verification_cost(PolicyMode mode) const {
  for (const ModeRow& row : default_mode_table()) {
    if (row.mode == mode) return row.verification_cost;
  }
  return 0;
}

Amount delegation_overhead(const OverheadTable& table, std::size_t bid_count,
                           bool contract_formed,
                           std::optional<PolicyMode> mode) {
  Amount total = table.rfq_fee;
  total += static_cast<Amount>(bid_count) * table.per_bid_eval;
  if (contract_formed) total += table.contract_cost;
  if (mode) total += table.verification_cost(*mode);
  return total;
}

const char* bid_reject_reason_name(BidRejectReason r) noexcept {
  switch (r) {
    case BidRejectReason::window_closed: return "window_closed";
    case BidRejectReason::stake_short: return "stake_short";
    case BidRejectReason::bad_signature: return "bad_signature";
    case BidRejectReason::insufficient_funds: return "insufficient_funds";
    case BidRejectReason::expired: return "expired";
  }
  return "?";
}

TaskRFQ& MarketBook::broadcast_rfq(TaskSpecification spec, Tick now,
                                   Tick bid_window, Amount min_stake,
                                   std::map<std::string, double> weights) {
  TaskRFQ rfq;
  rfq.rfq_id = "rfq:" + std::to_string(next_id_++);
  rfq.spec = std::move(spec);
  rfq.deadline_for_bids = now + bid_window;
  rfq.min_stake = min_stake;
  rfq.preference_weights = std::move(weights);
  rfq.validate(now);
  auto [it, _] = rfqs_.emplace(rfq.rfq_id, BookEntry{std::move(rfq), {}, {}, true});
  return it->second.rfq;
}

const TaskRFQ& MarketBook::rfq(const std::string& rfq_id) const {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  return it->second.rfq;
}

const std::vector<Bid>& MarketBook::bids(const std::string& rfq_id) const {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  return it->second.bids;
}

SubmitResult MarketBook::submit_bid(const std::string& rfq_id, const Bid& bid,
                                    const KeyRegistry& reg, Bank& bank,
                                    Tick now) {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  BookEntry& entry = it->second;

  auto reject = [](BidRejectReason r) { return SubmitResult{false, r}; };
  if (!entry.open || now >= entry.rfq.deadline_for_bids) {
    return reject(BidRejectReason::window_closed);
  }
  if (!reg.known(bid.agent_id) ||
      !reg.check(reg.resolve(bid.agent_id), as_span(bid.signing_bytes()),
                 bid.signature)) {
    return reject(BidRejectReason::bad_signature);
  }
  if (bid.reputation_bond < entry.rfq.min_stake) {
    return reject(BidRejectReason::stake_short);
  }
  if (bid.expiry <= now) {
    return reject(BidRejectReason::expired);
  }
  if (bank.balance(bid.agent_id) < bid.reputation_bond) {
    return reject(BidRejectReason::insufficient_funds);
  }
  if (bid.reputation_bond > 0) {
    bank.transfer(bid.agent_id, kBondPool, bid.reputation_bond,
                  LedgerReason::bond, now);
  }
  entry.bids.push_back(bid);
  return SubmitResult{true, std::nullopt};
}

SubmitResult MarketBook::revise_bid(const std::string& rfq_id,
                                    const Bid& revised, const KeyRegistry& reg,
                                    Bank& bank, Tick now) {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  BookEntry& entry = it->second;
  if (!entry.open || now >= entry.rfq.deadline_for_bids ||
      entry.revised.count(revised.agent_id) > 0) {
    return SubmitResult{false, BidRejectReason::window_closed};
  }
  auto existing = std::find_if(entry.bids.begin(), entry.bids.end(),
                               [&](const Bid& b) {
                                 return b.agent_id == revised.agent_id;
                               });
  if (existing == entry.bids.end()) {
    fail(Errc::not_found, "no admitted bid to revise for " + revised.agent_id);
  }
  if (!reg.check(reg.resolve(revised.agent_id), as_span(revised.signing_bytes()),
                 revised.signature)) {
    return SubmitResult{false, BidRejectReason::bad_signature};
  }
  if (revised.reputation_bond < entry.rfq.min_stake) {
    return SubmitResult{false, BidRejectReason::stake_short};
  }
  Amount delta = revised.reputation_bond - existing->reputation_bond;
  if (delta > 0) {
    if (bank.balance(revised.agent_id) < delta) {
      return SubmitResult{false, BidRejectReason::insufficient_funds};
    }
    bank.transfer(revised.agent_id, kBondPool, delta, LedgerReason::bond, now);
  } else if (delta < 0) {
    bank.transfer(kBondPool, revised.agent_id, -delta, LedgerReason::refund, now);
  }
  *existing = revised;
  entry.revised.insert(revised.agent_id);
  return SubmitResult{true, std::nullopt};
}

void MarketBook::refund_bond(const std::string& rfq_id,
                             const std::string& agent_id, Bank& bank,
                             Tick now) {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  auto& bids = it->second.bids;
  auto bid = std::find_if(bids.begin(), bids.end(), [&](const Bid& b) {
    return b.agent_id == agent_id;
  });
  if (bid == bids.end()) {
    fail(Errc::not_found, "no bid from " + agent_id + " on " + rfq_id);
  }
  if (bid->reputation_bond > 0) {
    bank.transfer(kBondPool, agent_id, bid->reputation_bond,
                  LedgerReason::refund, now);
  }
  bids.erase(bid);
}

void MarketBook::close_rfq(const std::string& rfq_id, Bank& bank, Tick now) {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  for (const Bid& b : it->second.bids) {
    if (b.reputation_bond > 0) {
      bank.transfer(kBondPool, b.agent_id, b.reputation_bond,
                    LedgerReason::refund, now);
    }
  }
  it->second.bids.clear();
  it->second.open = false;
}

void MarketBook::resolve_rfq(const std::string& rfq_id,
                             const std::string& winner, Bank& bank, Tick now) {
  auto it = rfqs_.find(rfq_id);
  if (it == rfqs_.end()) fail(Errc::not_found, "unknown rfq: " + rfq_id);
  for (const Bid& b : it->second.bids) {
    if (b.agent_id != winner && b.reputation_bond > 0) {
      bank.transfer(kBondPool, b.agent_id, b.reputation_bond,
                    LedgerReason::refund, now);
    }
  }
  it->second.open = false;
}

std::vector<std::string> MarketBook::open_rfqs() const {
  std::vector<std::string> out;
  for (const auto& [id, entry] : rfqs_) {
    if (entry.open) out.push_back(id);
  }
  return out;
}

// --------------------------------------------------------------------------
// Wire formats: bid_object field names match the protocol listing exactly.
// --------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Bid& b) {
  j = nlohmann::json{{"agent_id", b.agent_id},
                     {"estimated_cost", b.estimated_cost},
                     {"estimated_duration", b.estimated_duration},
                     {"privacy_guarantee",
                      privacy_guarantee_name(b.privacy_guarantee)},
                     {"reputation_bond", b.reputation_bond},
                     {"expiry", b.expiry},
                     {"signature", to_hex(as_span(b.signature))}};
}

void from_json(const nlohmann::json& j, Bid& b) {
  b = Bid{};
  j.at("agent_id").get_to(b.agent_id);
  j.at("estimated_cost").get_to(b.estimated_cost);
  j.at("estimated_duration").get_to(b.estimated_duration);
  auto g = privacy_guarantee_from_name(
      j.at("privacy_guarantee").get<std::string>());
  if (!g) fail(Errc::config_error, "unknown privacy_guarantee");
  b.privacy_guarantee = *g;
  j.at("reputation_bond").get_to(b.reputation_bond);
  j.at("expiry").get_to(b.expiry);
  if (j.contains("signature")) {
    Bytes sig = from_hex(j.at("signature").get<std::string>());
    if (sig.size() == b.signature.size()) {
      std::copy(sig.begin(), sig.end(), b.signature.begin());
    }
  }
}

void to_json(nlohmann::json& j, const TaskRFQ& r) {
  j = nlohmann::json{{"rfq_id", r.rfq_id},
                     {"spec", r.spec},
                     {"deadline_for_bids", r.deadline_for_bids},
                     {"min_stake", r.min_stake},
                     {"preference_weights", r.preference_weights}};
}

void from_json(const nlohmann::json& j, TaskRFQ& r) {
  r = TaskRFQ{};
  j.at("rfq_id").get_to(r.rfq_id);
  j.at("spec").get_to(r.spec);
  j.at("deadline_for_bids").get_to(r.deadline_for_bids);
  j.at("min_stake").get_to(r.min_stake);
  j.at("preference_weights").get_to(r.preference_weights);
}

}  // namespace delsim
