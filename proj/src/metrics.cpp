#include <algorithm>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "fedcell/error.hpp"
#include "fedcell/harness.hpp"

namespace fedcell::harness {

namespace {

constexpr const char* kMetricsHeader =
    "scenario,room,policy,seed,cumulative_q1_mbps,cumulative_avg_mbps,episodes";

// Table row order for the well-known policies; others follow alphabetically.
int policy_rank(const std::string& p) {
  static const std::vector<std::string> order{"random", "exhaustive", "single_rl", "frl"};
  const auto it = std::find(order.begin(), order.end(), p);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

MetricsRow summarize(const std::string& scenario, const std::string& room, const std::string& policy,
                     std::uint64_t seed, std::span<const env::EpisodeLog> logs) {
  MetricsRow row{scenario, room, policy, seed, 0.0, 0.0, static_cast<int>(logs.size())};
  for (const auto& l : logs) {
    row.cumulative_q1_mbps += l.mean_q1_mbps;
    row.cumulative_avg_mbps += l.mean_rate_mbps;
  }
  return row;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << kMetricsHeader << '\n' << std::setprecision(12);
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.room << ',' << r.policy << ',' << r.seed << ','
        << r.cumulative_q1_mbps << ',' << r.cumulative_avg_mbps << ',' << r.episodes << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("metrics CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw Error("metrics CSV header does not match schema: " + line);
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw Error("metrics CSV line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      rows.push_back({f[0], f[1], f[2], std::stoull(f[3]), std::stod(f[4]), std::stod(f[5]), std::stoi(f[6])});
    } catch (const std::exception&) {
      throw Error("metrics CSV line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ReportTable build_report(std::span<const MetricsRow> rows) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  ReportTable t;
  for (const auto& r : rows) {
    auto& c = cells[{r.policy, r.room}];
    c.first.push_back(r.cumulative_q1_mbps);
    c.second.push_back(r.cumulative_avg_mbps);
    if (std::find(t.policies.begin(), t.policies.end(), r.policy) == t.policies.end()) t.policies.push_back(r.policy);
    if (std::find(t.rooms.begin(), t.rooms.end(), r.room) == t.rooms.end()) t.rooms.push_back(r.room);
  }
  std::sort(t.policies.begin(), t.policies.end(), [](const std::string& a, const std::string& b) {
    return std::pair(policy_rank(a), a) < std::pair(policy_rank(b), b);
  });
  std::sort(t.rooms.begin(), t.rooms.end());
  t.values.assign(t.policies.size(),
                  std::vector<std::vector<std::optional<double>>>(2, std::vector<std::optional<double>>(t.rooms.size())));
  for (std::size_t p = 0; p < t.policies.size(); ++p) {
    for (std::size_t r = 0; r < t.rooms.size(); ++r) {
      const auto it = cells.find({t.policies[p], t.rooms[r]});
      if (it == cells.end()) continue;
      t.values[p][0][r] = median(it->second.first);
      t.values[p][1][r] = median(it->second.second);
    }
  }
  return t;
}

void write_report_csv(std::ostream& out, const ReportTable& t) {
  out << "algorithm,criterion";
  for (const auto& room : t.rooms) out << ',' << room;
  out << '\n' << std::setprecision(12);
  for (std::size_t p = 0; p < t.policies.size(); ++p) {
    for (int c = 0; c < 2; ++c) {
      out << t.policies[p] << ',' << (c == 0 ? "Q1" : "Avg");
      for (const auto& v : t.values[p][static_cast<std::size_t>(c)]) {
        out << ',';
        if (v) out << *v;
      }
      out << '\n';
    }
  }
}

void write_report_text(std::ostream& out, const ReportTable& t) {
  std::size_t name_w = 9;
  for (const auto& p : t.policies) name_w = std::max(name_w, p.size());
  const int col_w = 12;
  out << std::left << std::setw(static_cast<int>(name_w) + 2) << "Algorithm" << std::setw(11) << "Criterion";
  for (const auto& room : t.rooms) out << std::right << std::setw(col_w) << room;
  out << '\n';
  for (std::size_t p = 0; p < t.policies.size(); ++p) {
    for (int c = 0; c < 2; ++c) {
      out << std::left << std::setw(static_cast<int>(name_w) + 2) << (c == 0 ? t.policies[p] : "")
          << std::setw(11) << (c == 0 ? "Q1" : "Avg") << std::right;
      for (const auto& v : t.values[p][static_cast<std::size_t>(c)]) {
        if (v) {
          out << std::setw(col_w) << std::fixed << std::setprecision(1) << *v;
        } else {
          out << std::setw(col_w) << "";
        }
      }
      out << '\n';
    }
  }
  out << std::defaultfloat;
}

std::size_t episodes_to_fraction(std::span<const double> curve, double fraction, std::size_t window) {
  if (curve.empty()) return 0;
  window = std::max<std::size_t>(1, std::min(window, curve.size()));
  // Median of the full window ending at `end`.
  auto window_median = [&](std::size_t end) {
    return median(std::vector<double>(curve.begin() + static_cast<long>(end + 1 - window),
                                      curve.begin() + static_cast<long>(end) + 1));
  };
  const double threshold = fraction * window_median(curve.size() - 1);
  for (std::size_t i = window - 1; i < curve.size(); ++i) {
    if (window_median(i) >= threshold) return i;
  }
  return curve.size();
}

}  // namespace fedcell::harness
