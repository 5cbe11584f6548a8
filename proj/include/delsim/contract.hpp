#pragma once

#include <optional>
#include <string>
#include <vector>

#include "delsim/bank.hpp"
#include "delsim/decomposition.hpp"
#include "delsim/market.hpp"
#include "delsim/monitoring.hpp"
#include "delsim/verification.hpp"

namespace delsim {

enum class ContractState : std::uint8_t {
  Drafted,
  Funded,
  Active,
  Submitted,
  Disputed,
  Arbitrated,
  Settled,
  Defaulted,
  Reauctioned,
  Cancelled,
};

const char* contract_state_name(ContractState s) noexcept;

enum class ContractEvent : std::uint8_t {
  Fund,
  Activate,
  Submit,
  Challenge,
  Arbitrate,
  SettleOptimistic,
  SettleVerdict,
  Default,
  Reauction,
  Cancel,
};

const char* contract_event_name(ContractEvent e) noexcept;

// The declared automaton:
//   Drafted -> Funded -> Active
//   Active -> Submitted | Defaulted | Cancelled
//   Submitted -> Settled (window expiry) | Disputed
//   Disputed -> Arbitrated -> Settled
//   Defaulted -> Reauctioned
// Everything else is illegal.
std::optional<ContractState> next_state(ContractState from, ContractEvent event);

struct PenaltyTerms {
  bool default_price_difference = true;
};

// Release fraction of the escrow per verified completion fraction.
struct CompensationSchedule {
  // Linear by default: release = fraction of escrow.
  double apply(double completed_fraction) const;
};

struct DelegationContract {
  std::string contract_id;
  AgentId delegator;
  AgentId delegatee;
  TaskSpecification spec;
  VerificationPolicy verification_policy;
  Amount escrow_amount = 0;
  Amount delegatee_stake = 0;
  Amount dispute_bond = 0;  // matching bond unless overridden
  Tick dispute_window = 20;
  MonitoringPlan monitoring_plan;
  std::optional<AgentId> backup_agent;
  PenaltyTerms penalty_terms;
  std::optional<CompensationSchedule> checkpoint_compensation;
  ContractState state = ContractState::Drafted;

  // Lifecycle bookkeeping.
  Tick window_end = 0;
  Amount released_escrow = 0;  // paid out via checkpoint compensation
  std::optional<AgentId> challenger;
  Amount penalty_shortfall = 0;

  std::string escrow_account() const { return "escrow:" + contract_id; }

  nlohmann::json to_json() const;
};

struct SettlementSummary {
  bool pass = false;
  Amount escrow_to_delegatee = 0;
  Amount escrow_to_delegator = 0;
  Amount stake_refunded = 0;
  Amount stake_slashed = 0;
  Amount challenger_bond_refunded = 0;
  Amount challenger_bond_forfeited = 0;
};

class ContractStore {
 public:
  // Forms a Drafted contract from the auction winner.
  DelegationContract& draft(const Bid& winner, const AgentId& delegator,
                            const AgentId& delegatee, TaskSpecification spec,
                            MonitoringPlan plan, Tick dispute_window,
                            std::optional<AgentId> backup,
                            bool with_compensation_schedule);

  DelegationContract& get(const std::string& contract_id);
  const DelegationContract& get(const std::string& contract_id) const;
  bool has(const std::string& contract_id) const {
    return contracts_.count(contract_id) > 0;
  }

  std::vector<std::string> ids() const;

  // Escrow + stake debited into the contract account; FundingFailed leaves
  // the contract Drafted. stake_from_pool moves the winner's bid bond out of
  // the market pool instead of the delegatee's liquid balance.
  void fund(const std::string& contract_id, Bank& bank, Tick now,
            bool stake_from_pool);

  void activate(const std::string& contract_id);

  // Opens the optimistic dispute window.
  void submit_outcome(const std::string& contract_id, Tick now);

  void challenge(const std::string& contract_id, Bank& bank,
                 const AgentId& challenger, Amount bond, Tick now);

  void arbitrate(const std::string& contract_id);

  // Settles from Submitted (expired window, optimistic pass) or from
  // Arbitrated with the panel verdict.
  SettlementSummary settle(const std::string& contract_id, Bank& bank,
                           bool verdict_pass, Tick now);

  // Active -> Defaulted with the price-difference penalty charged against the
  // stake (capped); remaining escrow and stake refund to their owners. The
  // caller re-auctions and then marks Reauctioned.
  Amount default_contract(const std::string& contract_id, Bank& bank,
                          Amount new_price, Tick now);
  void mark_reauctioned(const std::string& contract_id);

  // Partial release per the compensation schedule; Unsupported without one.
  Amount checkpoint_compensation(const std::string& contract_id, Bank& bank,
                                 double verified_fraction, Tick now);

  // Cancellation with compensation: verified fraction pays the delegatee,
  // the rest refunds, stake returns.
  void cancel(const std::string& contract_id, Bank& bank, Tick now,
              double verified_fraction);

  // Escrow accounts of concluded contracts that still hold funds (should be
  // none at simulation end).
  std::vector<std::string> stranded_accounts(const Bank& bank) const;

 private:
  void apply_event(DelegationContract& c, ContractEvent event);

  std::map<std::string, DelegationContract> contracts_;
  std::uint64_t next_id_ = 0;
};

}  // namespace delsim
