#include "delsim/bank.hpp"

#include <istream>
#include <numeric>
#include <ostream>

namespace delsim {

const char* ledger_reason_name(LedgerReason r) noexcept {
  switch (r) {
    case LedgerReason::fund: return "fund";
    case LedgerReason::stake: return "stake";
    case LedgerReason::release: return "release";
    case LedgerReason::slash: return "slash";
    case LedgerReason::refund: return "refund";
    case LedgerReason::penalty: return "penalty";
    case LedgerReason::bond: return "bond";
    case LedgerReason::reward: return "reward";
    case LedgerReason::fee: return "fee";
  }
  return "?";
}

std::optional<LedgerReason> ledger_reason_from_name(std::string_view name) {
  for (LedgerReason r :
       {LedgerReason::fund, LedgerReason::stake, LedgerReason::release,
        LedgerReason::slash, LedgerReason::refund, LedgerReason::penalty,
        LedgerReason::bond, LedgerReason::reward, LedgerReason::fee}) {
    if (name == ledger_reason_name(r)) return r;
  }
  return std::nullopt;
}

void Bank::open_account(const std::string& account, Amount balance) {
  if (sealed_) fail(Errc::config_error, "bank already sealed");
  if (balance < 0) fail(Errc::config_error, "opening balance must be >= 0");
  if (balances_.count(account) > 0) {
    fail(Errc::duplicate_agent, "account exists: " + account);
  }
  balances_[account] = balance;
  opening_[account] = balance;
}

void Bank::seal() { sealed_ = true; }

void Bank::set_alias(const std::string& name, const std::string& account) {
  if (balances_.count(name) > 0) {
    fail(Errc::config_error, "cannot alias an existing account: " + name);
  }
  aliases_[name] = account;
}

const std::string& Bank::resolve(const std::string& name) const {
  auto it = aliases_.find(name);
  return it == aliases_.end() ? name : it->second;
}

Amount Bank::balance(const std::string& account) const {
  auto it = balances_.find(resolve(account));
  return it == balances_.end() ? 0 : it->second;
}

void Bank::transfer(const std::string& from, const std::string& to,
                    Amount amount, LedgerReason reason, Tick tick) {
  if (amount <= 0) fail(Errc::config_error, "transfer amount must be > 0");
  const std::string& src = resolve(from);
  const std::string& dst = resolve(to);
  auto it = balances_.find(src);
  if (it == balances_.end() || it->second < amount) {
    fail(Errc::insufficient_funds,
         src + " cannot cover " + std::to_string(amount));
  }
  it->second -= amount;
  balances_[dst] += amount;
  entries_.push_back({tick, src, dst, amount, reason});
}

Amount Bank::total() const {
  return std::accumulate(balances_.begin(), balances_.end(), Amount{0},
                         [](Amount acc, const auto& kv) {
                           return acc + kv.second;
                         });
}

void to_json(nlohmann::json& j, const LedgerEntry& e) {
  j = nlohmann::json{{"tick", e.tick},
                     {"from_account", e.from_account},
                     {"to_account", e.to_account},
                     {"amount", e.amount},
                     {"reason", ledger_reason_name(e.reason)}};
}

void from_json(const nlohmann::json& j, LedgerEntry& e) {
  e = LedgerEntry{};
  j.at("tick").get_to(e.tick);
  j.at("from_account").get_to(e.from_account);
  j.at("to_account").get_to(e.to_account);
  j.at("amount").get_to(e.amount);
  auto reason = ledger_reason_from_name(j.at("reason").get<std::string>());
  if (!reason) fail(Errc::config_error, "unknown ledger reason");
  e.reason = *reason;
}

void Bank::save_ledger(std::ostream& out) const {
  nlohmann::json header = {{"opening", opening_}};
  out << header.dump() << "\n";
  for (const LedgerEntry& e : entries_) {
    nlohmann::json line = e;
    out << line.dump() << "\n";
  }
}

Bank::AuditReport Bank::verify_ledger(std::istream& in) {
  AuditReport report;
  std::string line;
  if (!std::getline(in, line)) {
    report.ok = false;
    report.detail = "empty ledger file";
    return report;
  }
  std::map<std::string, Amount> balances;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    balances = header.at("opening").get<std::map<std::string, Amount>>();
  } catch (const std::exception& e) {
    report.ok = false;
    report.detail = std::string("bad header: ") + e.what();
    return report;
  }
  Amount opening_total = 0;
  for (const auto& [_, b] : balances) opening_total += b;
  report.opening_total = opening_total;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LedgerEntry e;
    try {
      e = nlohmann::json::parse(line).get<LedgerEntry>();
    } catch (const std::exception& ex) {
      report.ok = false;
      report.detail =
          "line " + std::to_string(line_no) + ": parse error: " + ex.what();
      return report;
    }
    if (e.amount <= 0) {
      report.ok = false;
      report.detail = "line " + std::to_string(line_no) + ": non-positive amount";
      return report;
    }
    auto it = balances.find(e.from_account);
    if (it == balances.end() || it->second < e.amount) {
      report.ok = false;
      report.detail = "line " + std::to_string(line_no) + ": " +
                      e.from_account + " overdrawn";
      return report;
    }
    it->second -= e.amount;
    balances[e.to_account] += e.amount;
  }
  Amount closing_total = 0;
  for (const auto& [_, b] : balances) closing_total += b;
  report.closing_total = closing_total;
  if (closing_total != opening_total) {
    report.ok = false;
    report.detail = "conservation violated";
  }
  return report;
}

}  // namespace delsim
