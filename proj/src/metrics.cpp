#include "delsim/metrics.hpp"

#include <algorithm>

namespace delsim {

nlohmann::json Metrics::to_json() const {
  nlohmann::json traj = nlohmann::json::object();
  for (const auto& [agent, points] : reputation_trajectories) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [tick, score] : points) arr.push_back({tick, score});
    traj[agent] = arr;
  }
  return {{"completion_rate", completion_rate},
          {"work_units", work_units},
          {"work_completed", work_completed},
          {"total_cost", total_cost},
          {"mean_makespan", mean_makespan},
          {"roots_completed", roots_completed},
          {"redelegation_count", redelegation_count},
          {"oscillation_max_per_task", oscillation_max_per_task},
          {"breach_detections", breach_detections},
          {"earnings_by_policy", earnings_by_policy},
          {"earnings_by_agent", earnings_by_agent},
          {"reputation_trajectories", traj}};
}

std::string log_digest(const std::vector<std::string>& lines) {
  Bytes all;
  for (const std::string& line : lines) {
    all.insert(all.end(), line.begin(), line.end());
    all.push_back('\n');
  }
  return to_hex(as_span(sha256(as_span(all))));
}

std::vector<nlohmann::json> parse_log(const std::vector<std::string>& lines) {
  std::vector<nlohmann::json> events;
  events.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      events.push_back(nlohmann::json::parse(lines[i]));
    } catch (const std::exception& e) {
      fail(Errc::replay_mismatch,
           "line " + std::to_string(i + 1) + " unparseable: " + e.what());
    }
  }
  return events;
}

Metrics compute_metrics(const std::vector<nlohmann::json>& events) {
  Metrics m;
  std::map<std::string, Tick> root_arrivals;
  std::vector<Tick> makespans;
  std::map<std::string, std::uint64_t> redelegations_per_task;
  std::map<std::string, Amount> initial_balance;
  std::map<std::string, Amount> final_balance;
  std::map<std::string, std::string> policy_of;

  for (const nlohmann::json& e : events) {
    const std::string type = e.value("type", "");
    if (type == "AGENT_REGISTERED") {
      const std::string account = e.at("account").get<std::string>();
      initial_balance[account] = e.at("balance").get<Amount>();
      policy_of[account] = e.value("policy", "honest");
    } else if (type == "BALANCE") {
      final_balance[e.at("account").get<std::string>()] =
          e.at("balance").get<Amount>();
    } else if (type == "WORK_UNIT") {
      ++m.work_units;
    } else if (type == "WORK_DONE") {
      if (e.value("ok", false)) ++m.work_completed;
    } else if (type == "ROOT_ARRIVED") {
      root_arrivals[e.at("task_id").get<std::string>()] =
          e.at("tick").get<Tick>();
    } else if (type == "ROOT_COMPLETED") {
      ++m.roots_completed;
      auto it = root_arrivals.find(e.at("task_id").get<std::string>());
      if (it != root_arrivals.end()) {
        makespans.push_back(e.at("tick").get<Tick>() - it->second);
      }
    } else if (type == "REDELEGATION") {
      ++m.redelegation_count;
      ++redelegations_per_task[e.at("task_id").get<std::string>()];
    } else if (type == "TOKEN_VERIFY") {
      if (!e.value("allowed", true)) ++m.breach_detections;
    } else if (type == "VERDICT") {
      if (!e.value("pass", true)) ++m.breach_detections;
    } else if (type == "TRIGGER") {
      if (e.value("kind", "") == "SecurityFlag") ++m.breach_detections;
    } else if (type == "LEDGER") {
      const std::string reason = e.value("reason", "");
      if (reason == "fee" || reason == "release") {
        m.total_cost += e.at("amount").get<Amount>();
      }
    } else if (type == "REP_RECORD") {
      m.reputation_trajectories[e.at("agent").get<std::string>()].emplace_back(
          e.at("tick").get<Tick>(), e.at("composite").get<double>());
    }
  }

  m.completion_rate =
      m.work_units > 0 ? static_cast<double>(m.work_completed) /
                             static_cast<double>(m.work_units)
                       : 0.0;
  if (!makespans.empty()) {
    Tick sum = 0;
    for (Tick t : makespans) sum += t;
    m.mean_makespan =
        static_cast<double>(sum) / static_cast<double>(makespans.size());
  }
  for (const auto& [task, n] : redelegations_per_task) {
    m.oscillation_max_per_task = std::max(m.oscillation_max_per_task, n);
  }
  for (const auto& [account, initial] : initial_balance) {
    auto it = final_balance.find(account);
    const Amount delta = (it != final_balance.end() ? it->second : initial) -
                         initial;
    m.earnings_by_agent[account] = delta;
    m.earnings_by_policy[policy_of[account]] += delta;
  }
  return m;
}

ReplayResult replay_log(const std::vector<std::string>& lines) {
  const auto events = parse_log(lines);

  // Sequence audit: contiguous from 0 in emission order.
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!events[i].contains("seq") ||
        events[i].at("seq").get<std::uint64_t>() != i) {
      fail(Errc::replay_mismatch,
           "sequence break at line " + std::to_string(i + 1));
    }
  }

  // Ledger audit: replay transfers over the registered opening balances and
  // cross-check the final BALANCE statements.
  std::map<std::string, Amount> balances;
  std::map<std::string, Amount> reported_final;
  for (const nlohmann::json& e : events) {
    const std::string type = e.value("type", "");
    if (type == "AGENT_REGISTERED") {
      balances[e.at("account").get<std::string>()] +=
          e.at("balance").get<Amount>();
    } else if (type == "LEDGER") {
      const std::string from = e.at("from_account").get<std::string>();
      const std::string to = e.at("to_account").get<std::string>();
      const Amount amount = e.at("amount").get<Amount>();
      if (amount <= 0) fail(Errc::replay_mismatch, "non-positive ledger amount");
      balances[from] -= amount;
      balances[to] += amount;
      if (balances[from] < 0) {
        fail(Errc::replay_mismatch, from + " overdrawn in replay");
      }
    } else if (type == "BALANCE") {
      reported_final[e.at("account").get<std::string>()] =
          e.at("balance").get<Amount>();
    }
  }
  for (const auto& [account, reported] : reported_final) {
    auto it = balances.find(account);
    const Amount computed = it == balances.end() ? 0 : it->second;
    if (computed != reported) {
      fail(Errc::replay_mismatch, "final balance mismatch for " + account);
    }
  }

  ReplayResult out;
  out.digest = log_digest(lines);
  out.metrics = compute_metrics(events);
  return out;
}

}  // namespace delsim
