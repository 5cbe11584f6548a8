#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delsim/bank.hpp"
#include "delsim/decomposition.hpp"
#include "delsim/identity.hpp"

namespace delsim {

enum class PrivacyGuarantee : std::uint8_t { none, tee_enclave, crypto_proof };

const char* privacy_guarantee_name(PrivacyGuarantee g) noexcept;
std::optional<PrivacyGuarantee> privacy_guarantee_from_name(std::string_view name);

struct TaskRFQ {
  std::string rfq_id;
  TaskSpecification spec;
  Tick deadline_for_bids = 0;
  Amount min_stake = 0;
  // objective -> weight, weights >= 0 summing to 1.
  std::map<std::string, double> preference_weights;

  void validate(Tick now) const;
};

struct Bid {
  std::string agent_id;
  Amount estimated_cost = 0;
  Tick estimated_duration = 0;
  PrivacyGuarantee privacy_guarantee = PrivacyGuarantee::none;
  Amount reputation_bond = 0;
  Tick expiry = 0;
  Digest32 signature{};

  Bytes signing_bytes() const;
  static Bid make(const KeyRegistry& reg, const AgentId& agent, Amount cost,
                  Tick duration, PrivacyGuarantee privacy, Amount bond,
                  Tick expiry);
};

// Lower is better in every component.
struct ObjectiveVector {
  double cost = 0.0;
  double latency = 0.0;
  double risk = 0.0;
  double privacy_penalty = 0.0;

  std::array<double, 4> components() const {
    return {cost, latency, risk, privacy_penalty};
  }
};

ObjectiveVector objectives_for(const Bid& bid, double reputation_composite);

// True iff a dominates b: <= in all components, < in at least one.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);

struct ScoredBid {
  Bid bid;
  ObjectiveVector objectives;
  double reputation = 0.5;
};

// Exactly the non-dominated subset, output in stable order by agent_id.
std::vector<ScoredBid> pareto_filter(const std::vector<ScoredBid>& bids);

struct SelectionOutcome {
  std::optional<ScoredBid> winner;  // empty = NoMatch
  std::vector<std::string> losers;  // agent ids whose bonds are refunded
};

// Trust-gated scalarized selection over a non-dominated set. Bids whose
// reputation is below threshold(criticality) are dropped; among survivors the
// weighted normalized objective sum is minimized, ties broken by higher
// reputation then lexicographic agent id.
SelectionOutcome select(const std::vector<ScoredBid>& nondominated,
                        const std::map<std::string, double>& weights,
                        const std::function<double(double)>& trust_threshold,
                        double criticality);

struct OverheadTable {
  Amount rfq_fee = 10'000;
  Amount per_bid_eval = 5'000;
  Amount contract_cost = 25'000;

  Amount verification_cost(PolicyMode mode) const;
};

// Aggregate cost of negotiation, contract creation, and verification for one
// pass through the pipeline.
Amount delegation_overhead(const OverheadTable& table, std::size_t bid_count,
                           bool contract_formed,
                           std::optional<PolicyMode> mode);

enum class BidRejectReason : std::uint8_t {
  window_closed,
  stake_short,
  bad_signature,
  insufficient_funds,
  expired,
};

const char* bid_reject_reason_name(BidRejectReason r) noexcept;

struct SubmitResult {
  bool accepted = false;
  std::optional<BidRejectReason> reason;
};

// Order book for open RFQs. Bonds are debited into the pool account on
// admission and leave it on refund/forfeit/rollover.
class MarketBook {
 public:
  static constexpr const char* kBondPool = "pool:bonds";

  TaskRFQ& broadcast_rfq(TaskSpecification spec, Tick now, Tick bid_window,
                         Amount min_stake,
                         std::map<std::string, double> weights);

  SubmitResult submit_bid(const std::string& rfq_id, const Bid& bid,
                          const KeyRegistry& reg, Bank& bank, Tick now);

  // Single optional re-quote round: an admitted bidder may revise once before
  // the deadline after the current best scalarized score is published. The
  // bond delta moves against the pool.
  SubmitResult revise_bid(const std::string& rfq_id, const Bid& revised,
                          const KeyRegistry& reg, Bank& bank, Tick now);

  const TaskRFQ& rfq(const std::string& rfq_id) const;
  bool has_rfq(const std::string& rfq_id) const { return rfqs_.count(rfq_id) > 0; }
  const std::vector<Bid>& bids(const std::string& rfq_id) const;

  // Refunds a specific bidder's bond out of the pool.
  void refund_bond(const std::string& rfq_id, const std::string& agent_id,
                   Bank& bank, Tick now);

  // Closes the RFQ, refunding every admitted bond (used for NoMatch and
  // wind-down paths).
  void close_rfq(const std::string& rfq_id, Bank& bank, Tick now);

  // Marks the RFQ resolved with a winner whose bond stays in the pool for the
  // contract to roll into stake; losers are refunded.
  void resolve_rfq(const std::string& rfq_id, const std::string& winner,
                   Bank& bank, Tick now);

  std::vector<std::string> open_rfqs() const;

 private:
  struct BookEntry {
    TaskRFQ rfq;
    std::vector<Bid> bids;
    std::set<std::string> revised;  // agents that already used their re-quote
    bool open = true;
  };
  std::map<std::string, BookEntry> rfqs_;
  std::uint64_t next_id_ = 0;
};

void to_json(nlohmann::json& j, const Bid& b);
void from_json(const nlohmann::json& j, Bid& b);
void to_json(nlohmann::json& j, const TaskRFQ& r);
void from_json(const nlohmann::json& j, TaskRFQ& r);

}  // namespace delsim
