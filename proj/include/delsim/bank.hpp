#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delsim/common.hpp"

#include "json.hpp"

namespace delsim {

enum class LedgerReason : std::uint8_t {
  fund,
  stake,
  release,
  slash,
  refund,
  penalty,
  bond,
  reward,
  fee,
};

const char* ledger_reason_name(LedgerReason r) noexcept;
std::optional<LedgerReason> ledger_reason_from_name(std::string_view name);

// Double-entry record: every debit has a matching credit, amounts positive.
struct LedgerEntry {
  Tick tick = 0;
  std::string from_account;
  std::string to_account;
  Amount amount = 0;
  LedgerReason reason = LedgerReason::fund;
};

// In-process bank: agent accounts plus system accounts (escrow:<contract>,
// pool:bonds, sink:fees, ...). After sealing, money only moves by transfer,
// so the global sum is invariant by construction; audits recheck it anyway.
class Bank {
 public:
  // Account creation with an opening balance; only before seal().
  void open_account(const std::string& account, Amount balance);
  void seal();
  bool sealed() const { return sealed_; }

  // Routes one name onto another account (sybil identities share their
  // operator's budget). Aliases are not accounts; totals are unaffected.
  void set_alias(const std::string& name, const std::string& account);

  Amount balance(const std::string& account) const;
  bool has_account(const std::string& account) const {
    return balances_.count(account) > 0;
  }

  // Throws InsufficientFunds; accounts are created on first credit.
  void transfer(const std::string& from, const std::string& to, Amount amount,
                LedgerReason reason, Tick tick);

  Amount total() const;

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  const std::map<std::string, Amount>& balances() const { return balances_; }
  const std::map<std::string, Amount>& opening_balances() const {
    return opening_;
  }

  // JSON-lines persistence: one header line with opening balances, then one
  // entry per line.
  void save_ledger(std::ostream& out) const;

  struct AuditReport {
    bool ok = true;
    std::string detail;
    Amount opening_total = 0;
    Amount closing_total = 0;
  };

  // Offline recheck of a persisted ledger: positive amounts, non-negative
  // running balances, constant total.
  static AuditReport verify_ledger(std::istream& in);

 private:
  const std::string& resolve(const std::string& name) const;

  bool sealed_ = false;
  std::map<std::string, Amount> balances_;
  std::map<std::string, Amount> opening_;
  std::map<std::string, std::string> aliases_;
  std::vector<LedgerEntry> entries_;
};

void to_json(nlohmann::json& j, const LedgerEntry& e);
void from_json(const nlohmann::json& j, LedgerEntry& e);

}  // namespace delsim
