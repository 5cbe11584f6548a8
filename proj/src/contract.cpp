#include "delsim/contract.hpp"

#include <algorithm>
#include <cmath>

namespace delsim {

const char* contract_state_name(ContractState s) noexcept {
  switch (s) {
    case ContractState::Drafted: return "Drafted";
    case ContractState::Funded: return "Funded";
    case ContractState::Active: return "Active";
    case ContractState::Submitted: return "Submitted";
    case ContractState::Disputed: return "Disputed";
    case ContractState::Arbitrated: return "Arbitrated";
    case ContractState::Settled: return "Settled";
    case ContractState::Defaulted: return "Defaulted";
    case ContractState::Reauctioned: return "Reauctioned";
    case ContractState::Cancelled: return "Cancelled";
  }
  return "?";
}

const char* contract_event_name(ContractEvent e) noexcept {
  switch (e) {
    case ContractEvent::Fund: return "Fund";
    case ContractEvent::Activate: return "Activate";
    case ContractEvent::Submit: return "Submit";
    case ContractEvent::Challenge: return "Challenge";
    case ContractEvent::Arbitrate: return "Arbitrate";
    case ContractEvent::SettleOptimistic: return "SettleOptimistic";
    case ContractEvent::SettleVerdict: return "SettleVerdict";
    case ContractEvent::Default: return "Default";
    case ContractEvent::Reauction: return "Reauction";
    case ContractEvent::Cancel: return "Cancel";
  }
  return "?";
}

std::optional<ContractState> next_state(ContractState from,
                                        ContractEvent event) {
  switch (event) {
    case ContractEvent::Fund:
      if (from == ContractState::Drafted) return ContractState::Funded;
      break;
    case ContractEvent::Activate:
      if (from == ContractState::Funded) return ContractState::Active;
      break;
    case ContractEvent::Submit:
      if (from == ContractState::Active) return ContractState::Submitted;
      break;
    case ContractEvent::Challenge:
      if (from == ContractState::Submitted) return ContractState::Disputed;
      break;
    case ContractEvent::Arbitrate:
      if (from == ContractState::Disputed) return ContractState::Arbitrated;
      break;
    case ContractEvent::SettleOptimistic:
      if (from == ContractState::Submitted) return ContractState::Settled;
      break;
    case ContractEvent::SettleVerdict:
      if (from == ContractState::Arbitrated) return ContractState::Settled;
      break;
    case ContractEvent::Default:
      if (from == ContractState::Active) return ContractState::Defaulted;
      break;
    case ContractEvent::Reauction:
      if (from == ContractState::Defaulted) return ContractState::Reauctioned;
      break;
    case ContractEvent::Cancel:
      if (from == ContractState::Active) return ContractState::Cancelled;
      break;
  }
  return std::nullopt;
}

double CompensationSchedule::apply(double completed_fraction) const {
  return std::clamp(completed_fraction, 0.0, 1.0);
}

nlohmann::json DelegationContract::to_json() const {
  nlohmann::json j{{"contract_id", contract_id},
                   {"delegator", delegator.id},
                   {"delegatee", delegatee.id},
                   {"spec", spec},
                   {"verification_policy", verification_policy},
                   {"escrow_amount", escrow_amount},
                   {"delegatee_stake", delegatee_stake},
                   {"dispute_bond", dispute_bond},
                   {"dispute_window", dispute_window},
                   {"state", contract_state_name(state)},
                   {"window_end", window_end},
                   {"released_escrow", released_escrow},
                   {"penalty_shortfall", penalty_shortfall}};
  if (backup_agent) j["backup_agent"] = backup_agent->id;
  if (challenger) j["challenger"] = challenger->id;
  j["checkpoint_compensation"] = checkpoint_compensation.has_value();
  return j;
}

void ContractStore::apply_event(DelegationContract& c, ContractEvent event) {
  auto next = next_state(c.state, event);
  if (!next) {
    fail(Errc::invalid_transition,
         std::string(contract_event_name(event)) + " illegal from " +
             contract_state_name(c.state) + " on " + c.contract_id);
  }
  c.state = *next;
}

DelegationContract& ContractStore::draft(const Bid& winner,
                                         const AgentId& delegator,
                                         const AgentId& delegatee,
                                         TaskSpecification spec,
                                         MonitoringPlan plan,
                                         Tick dispute_window,
                                         std::optional<AgentId> backup,
                                         bool with_compensation_schedule) {
  DelegationContract c;
  c.contract_id = "con:" + std::to_string(next_id_++);
  c.delegator = delegator;
  c.delegatee = delegatee;
  c.verification_policy = spec.verification_policy;
  c.spec = std::move(spec);
  c.escrow_amount = winner.estimated_cost;
  c.delegatee_stake = winner.reputation_bond;
  c.dispute_bond = c.delegatee_stake;  // matching bond unless overridden
  c.dispute_window = dispute_window;
  c.monitoring_plan = plan;
  c.backup_agent = std::move(backup);
  if (with_compensation_schedule) {
    c.checkpoint_compensation = CompensationSchedule{};
  }
  auto [it, _] = contracts_.emplace(c.contract_id, std::move(c));
  return it->second;
}

DelegationContract& ContractStore::get(const std::string& contract_id) {
  auto it = contracts_.find(contract_id);
  if (it == contracts_.end()) {
    fail(Errc::not_found, "unknown contract: " + contract_id);
  }
  return it->second;
}

const DelegationContract& ContractStore::get(
    const std::string& contract_id) const {
  auto it = contracts_.find(contract_id);
  if (it == contracts_.end()) {
    fail(Errc::not_found, "unknown contract: " + contract_id);
  }
  return it->second;
}

std::vector<std::string> ContractStore::ids() const {
  std::vector<std::string> out;
  out.reserve(contracts_.size());
  for (const auto& [id, _] : contracts_) out.push_back(id);
  return out;
}

void ContractStore::fund(const std::string& contract_id, Bank& bank, Tick now,
                         bool stake_from_pool) {
  DelegationContract& c = get(contract_id);
  if (c.state != ContractState::Drafted) {
    fail(Errc::invalid_transition,
         "fund illegal from " + std::string(contract_state_name(c.state)));
  }
  if (c.escrow_amount <= 0) {
    fail(Errc::funding_failed, "escrow must be > 0 once funded");
  }
  if (bank.balance(c.delegator.id) < c.escrow_amount) {
    fail(Errc::funding_failed, "delegator cannot cover escrow");
  }
  const std::string stake_source =
      stake_from_pool ? MarketBook::kBondPool : c.delegatee.id;
  if (c.delegatee_stake > 0 && bank.balance(stake_source) < c.delegatee_stake) {
    fail(Errc::funding_failed, "delegatee cannot cover stake");
  }
  bank.transfer(c.delegator.id, c.escrow_account(), c.escrow_amount,
                LedgerReason::fund, now);
  if (c.delegatee_stake > 0) {
    bank.transfer(stake_source, c.escrow_account(), c.delegatee_stake,
                  LedgerReason::stake, now);
  }
  apply_event(c, ContractEvent::Fund);
}

void ContractStore::activate(const std::string& contract_id) {
  apply_event(get(contract_id), ContractEvent::Activate);
}

void ContractStore::submit_outcome(const std::string& contract_id, Tick now) {
  DelegationContract& c = get(contract_id);
  apply_event(c, ContractEvent::Submit);
  c.window_end = now + c.dispute_window;
}

void ContractStore::challenge(const std::string& contract_id, Bank& bank,
                              const AgentId& challenger, Amount bond,
                              Tick now) {
  DelegationContract& c = get(contract_id);
  if (c.state != ContractState::Submitted || now >= c.window_end) {
    fail(Errc::window_closed, "dispute window closed on " + contract_id);
  }
  if (bond != c.dispute_bond) {
    fail(Errc::bond_short, "challenge requires the matching bond");
  }
  if (bond > 0) {
    bank.transfer(challenger.id, c.escrow_account(), bond, LedgerReason::bond,
                  now);
  }
  c.challenger = challenger;
  apply_event(c, ContractEvent::Challenge);
}

void ContractStore::arbitrate(const std::string& contract_id) {
  apply_event(get(contract_id), ContractEvent::Arbitrate);
}

SettlementSummary ContractStore::settle(const std::string& contract_id,
                                        Bank& bank, bool verdict_pass,
                                        Tick now) {
  DelegationContract& c = get(contract_id);
  if (c.state == ContractState::Submitted) {
    if (now < c.window_end) {
      fail(Errc::invalid_transition,
           "optimistic settlement before window expiry on " + contract_id);
    }
    apply_event(c, ContractEvent::SettleOptimistic);
  } else {
    apply_event(c, ContractEvent::SettleVerdict);
  }

  SettlementSummary s;
  s.pass = verdict_pass;
  const std::string escrow = c.escrow_account();
  const Amount escrow_left = c.escrow_amount - c.released_escrow;
  if (verdict_pass) {
    if (escrow_left > 0) {
      bank.transfer(escrow, c.delegatee.id, escrow_left, LedgerReason::release,
                    now);
      s.escrow_to_delegatee = escrow_left;
    }
    if (c.delegatee_stake > 0) {
      bank.transfer(escrow, c.delegatee.id, c.delegatee_stake,
                    LedgerReason::refund, now);
      s.stake_refunded = c.delegatee_stake;
    }
    if (c.challenger && c.dispute_bond > 0) {
      // Fail-to-prove: the wrong challenger's bond compensates the delegatee.
      bank.transfer(escrow, c.delegatee.id, c.dispute_bond,
                    LedgerReason::penalty, now);
      s.challenger_bond_forfeited = c.dispute_bond;
    }
  } else {
    if (escrow_left > 0) {
      bank.transfer(escrow, c.delegator.id, escrow_left, LedgerReason::refund,
                    now);
      s.escrow_to_delegator = escrow_left;
    }
    if (c.delegatee_stake > 0) {
      // Slashing is compensatory: the stake goes to the delegator.
      bank.transfer(escrow, c.delegator.id, c.delegatee_stake,
                    LedgerReason::slash, now);
      s.stake_slashed = c.delegatee_stake;
    }
    if (c.challenger && c.dispute_bond > 0) {
      bank.transfer(escrow, c.challenger->id, c.dispute_bond,
                    LedgerReason::refund, now);
      s.challenger_bond_refunded = c.dispute_bond;
    }
  }
  return s;
}

Amount ContractStore::default_contract(const std::string& contract_id,
                                       Bank& bank, Amount new_price, Tick now) {
  DelegationContract& c = get(contract_id);
  apply_event(c, ContractEvent::Default);

  const std::string escrow = c.escrow_account();
  Amount penalty = 0;
  if (c.penalty_terms.default_price_difference) {
    penalty = std::max<Amount>(0, new_price - c.escrow_amount);
    if (penalty > c.delegatee_stake) {
      c.penalty_shortfall = penalty - c.delegatee_stake;
      penalty = c.delegatee_stake;  // capped at the stake
    }
  }
  if (penalty > 0) {
    bank.transfer(escrow, c.delegator.id, penalty, LedgerReason::penalty, now);
  }
  const Amount stake_back = c.delegatee_stake - penalty;
  if (stake_back > 0) {
    bank.transfer(escrow, c.delegatee.id, stake_back, LedgerReason::refund, now);
  }
  const Amount escrow_left = c.escrow_amount - c.released_escrow;
  if (escrow_left > 0) {
    bank.transfer(escrow, c.delegator.id, escrow_left, LedgerReason::refund,
                  now);
  }
  return penalty;
}

void ContractStore::mark_reauctioned(const std::string& contract_id) {
  apply_event(get(contract_id), ContractEvent::Reauction);
}

Amount ContractStore::checkpoint_compensation(const std::string& contract_id,
                                              Bank& bank,
                                              double verified_fraction,
                                              Tick now) {
  DelegationContract& c = get(contract_id);
  if (!c.checkpoint_compensation) {
    fail(Errc::unsupported, "no compensation schedule on " + contract_id);
  }
  const double f = c.checkpoint_compensation->apply(verified_fraction);
  const Amount target = static_cast<Amount>(
      std::floor(f * static_cast<double>(c.escrow_amount)));
  const Amount release = target - c.released_escrow;
  if (release <= 0) return 0;
  bank.transfer(c.escrow_account(), c.delegatee.id, release,
                LedgerReason::release, now);
  c.released_escrow += release;
  return release;
}

void ContractStore::cancel(const std::string& contract_id, Bank& bank, Tick now,
                           double verified_fraction) {
  DelegationContract& c = get(contract_id);
  if (c.checkpoint_compensation && verified_fraction > 0.0) {
    checkpoint_compensation(contract_id, bank, verified_fraction, now);
  }
  apply_event(c, ContractEvent::Cancel);
  const std::string escrow = c.escrow_account();
  const Amount escrow_left = c.escrow_amount - c.released_escrow;
  if (escrow_left > 0) {
    bank.transfer(escrow, c.delegator.id, escrow_left, LedgerReason::refund,
                  now);
  }
  if (c.delegatee_stake > 0) {
    bank.transfer(escrow, c.delegatee.id, c.delegatee_stake,
                  LedgerReason::refund, now);
  }
}

std::vector<std::string> ContractStore::stranded_accounts(
    const Bank& bank) const {
  std::vector<std::string> out;
  for (const auto& [id, c] : contracts_) {
    const bool concluded = c.state == ContractState::Settled ||
                           c.state == ContractState::Reauctioned ||
                           c.state == ContractState::Cancelled;
    if (concluded && bank.balance(c.escrow_account()) != 0) {
      out.push_back(c.escrow_account());
    }
  }
  return out;
}

}  // namespace delsim
