#ifndef CAPTAIN_REPORT_HPP
#define CAPTAIN_REPORT_HPP

#include <algorithm>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "captain/error.hpp"
#include "captain/events.hpp"
#include "captain/metrics.hpp"
#include "captain/plan.hpp"
#include "captain/stats.hpp"

namespace captain {

struct SessionLabel {
  std::string id;
  std::string condition;
};

/// Parses "id:condition"; a bare "condition" takes the fallback id.
inline SessionLabel parse_label(const std::string& text, std::string fallback_id) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) return {std::move(fallback_id), text};
  return {text.substr(0, colon), text.substr(colon + 1)};
}

struct MetricTest {
  std::string metric;
  std::string condition_a;
  std::string condition_b;
  stats::PairedTTestResult result;
};

struct SessionReport {
  std::vector<SessionMetrics> sessions;
  std::vector<MetricTest> ttests;
};

/// Per-session metrics plus, when exactly two conditions are present,
/// paired one-sided t-tests of (first condition) > (second condition).
/// Sessions pair up by their order within each condition.
inline SessionReport session_report(const std::vector<RemovalLog>& logs, const std::vector<const ZonePlan*>& plans,
                                    const std::vector<SessionLabel>& labels, BreachRules rules = {}) {
  if (logs.size() != plans.size() || logs.size() != labels.size())
    throw Error(Errc::MisalignedInputs, std::to_string(logs.size()) + " logs, " + std::to_string(plans.size()) +
                                            " plans, " + std::to_string(labels.size()) + " labels");
  SessionReport report;
  for (std::size_t s = 0; s < logs.size(); ++s) {
    if (plans[s] == nullptr) throw Error(Errc::MisalignedInputs, "missing plan");
    report.sessions.push_back(compute_metrics(logs[s], *plans[s], labels[s].id, labels[s].condition, rules));
  }

  std::vector<std::string> conditions;
  for (const auto& m : report.sessions)
    if (std::find(conditions.begin(), conditions.end(), m.condition) == conditions.end())
      conditions.push_back(m.condition);
  if (conditions.size() < 2) return report;
  if (conditions.size() > 2)
    throw Error(Errc::MisalignedInputs, "paired tests need exactly two conditions, got " +
                                            std::to_string(conditions.size()));

  std::vector<const SessionMetrics*> group_a, group_b;
  for (const auto& m : report.sessions) (m.condition == conditions[0] ? group_a : group_b).push_back(&m);
  if (group_a.size() != group_b.size())
    throw Error(Errc::MisalignedInputs, "conditions have different session counts");
  if (group_a.size() < 2) return report;

  auto add_test = [&](const std::string& name, const std::function<std::optional<double>(const SessionMetrics&)>& get) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < group_a.size(); ++i) {
      const auto va = get(*group_a[i]);
      const auto vb = get(*group_b[i]);
      if (!va || !vb) return;  // metric not applicable to every pair
      a.push_back(*va);
      b.push_back(*vb);
    }
    report.ttests.push_back({name, conditions[0], conditions[1], stats::paired_t_one_sided(a, b)});
  };
  for (Zone z : kDrillableZones)
    add_test("completion_pct." + std::string(zone_name(z)),
             [z](const SessionMetrics& m) { return m.completion_pct[zone_index(z)]; });
  add_test("drill_time_s", [](const SessionMetrics& m) { return std::optional<double>(m.drill_time_s); });
  add_test("breach_count",
           [](const SessionMetrics& m) { return std::optional<double>(static_cast<double>(m.breach_count)); });
  return report;
}

inline ordered_json report_to_json(const SessionReport& report) {
  ordered_json j;
  j["sessions"] = ordered_json::array();
  for (const auto& m : report.sessions) j["sessions"].push_back(metrics_to_json(m));
  j["ttests"] = ordered_json::array();
  for (const auto& t : report.ttests) {
    ordered_json e;
    e["metric"] = t.metric;
    e["a"] = t.condition_a;
    e["b"] = t.condition_b;
    e["alternative"] = "a > b";
    e["n"] = t.result.n;
    e["df"] = t.result.df;
    e["mean_diff"] = t.result.mean_diff;
    e["sd_diff"] = t.result.sd_diff;
    e["t_stat"] = t.result.t_stat;  // +-inf serialises as null
    e["p_one_sided"] = t.result.p_one_sided;
    j["ttests"].push_back(std::move(e));
  }
  return j;
}

inline std::string format_report_table(const SessionReport& report) {
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  os << std::left << std::setw(16) << "session" << std::setw(16) << "condition" << std::right << std::setw(9)
     << "GREEN%" << std::setw(9) << "YELLOW%" << std::setw(9) << "RED%" << std::setw(10) << "ANATOMY%"
     << std::setw(10) << "time_s" << std::setw(9) << "breaches" << '\n';
  for (const auto& m : report.sessions) {
    os << std::left << std::setw(16) << m.session_id << std::setw(16) << m.condition << std::right << std::setw(9)
       << pct(m.completion_pct[zone_index(Zone::Green)]) << std::setw(9)
       << pct(m.completion_pct[zone_index(Zone::Yellow)]) << std::setw(9)
       << pct(m.completion_pct[zone_index(Zone::Red)]) << std::setw(10)
       << pct(m.completion_pct[zone_index(Zone::Anatomy)]) << std::setw(10) << std::fixed << std::setprecision(3)
       << m.drill_time_s << std::setw(9) << m.breach_count << '\n';
  }
  if (!report.ttests.empty()) {
    os << "\npaired one-sided t-tests (alternative: a > b)\n";
    for (const auto& t : report.ttests) {
      os << "  " << std::left << std::setw(24) << t.metric << std::right << " " << t.condition_a << " vs "
         << t.condition_b << "  n=" << t.result.n << "  mean_diff=" << std::setprecision(4) << t.result.mean_diff
         << "  t=" << t.result.t_stat << "  p=" << std::setprecision(6) << t.result.p_one_sided << '\n';
    }
  }
  return os.str();
}

}  // namespace captain

#endif  // CAPTAIN_REPORT_HPP
