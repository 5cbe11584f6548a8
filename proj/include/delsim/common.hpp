#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace delsim {

// Simulation time is discrete; all durations are integer ticks.
using Tick = std::uint64_t;

// Currency is integer micro-units throughout; 5.00 units == 5'000'000.
using Amount = std::int64_t;

inline constexpr Amount kUnit = 1'000'000;

enum class Errc {
  invalid_caveat,
  duplicate_agent,
  not_found,
  wrong_task,
  undecomposable_task,
  invalid_transition,
  funding_failed,
  bond_short,
  window_closed,
  unsupported,
  invalid_credential,
  corrupt_snapshot,
  invalid_panel,
  uncertified_auditor,
  mechanism_unavailable,
  replay_mismatch,
  config_error,
  insufficient_funds,
  invariant_violation,
};

const char* errc_name(Errc code) noexcept;

class SimError : public std::runtime_error {
 public:
  SimError(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw SimError(code, what);
}

}  // namespace delsim
