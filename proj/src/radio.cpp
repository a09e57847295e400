#include "fedcell/radio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "fedcell/error.hpp"
#include "fedcell/units.hpp"

namespace fedcell::radio {

void validate(const RadioParams& params) {
  if (!(params.bandwidth_hz > 0.0)) throw Error("radio.bandwidth_hz must be > 0");
  if (!(params.carrier_ghz > 0.0)) throw Error("radio.carrier_ghz must be > 0");
  if (!std::isfinite(params.noise_power_dbm)) throw Error("radio.noise_power_dbm must be finite");
}

double pathloss_db(double d3d, bool los, const RadioParams& params) {
  const double d = std::isfinite(d3d) ? std::max(d3d, 1.0) : 1.0;
  const double log_d = std::log10(d);
  const double log_f = std::log10(params.carrier_ghz);
  if (los) return 22.0 * log_d + 28.0 + 20.0 * log_f;
  return 36.7 * log_d + 22.7 + 26.0 * log_f - 0.3 * (params.ue_height_m - 1.5);
}

CqiTable::CqiTable(std::vector<CqiEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error("CQI table is empty");
  if (entries_.front().cqi_index != 0 || entries_.front().modulation_bits != 0 ||
      entries_.front().code_rate_x1024 != 0) {
    throw Error("CQI table row 0 must be the zero-rate out-of-range entry");
  }
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (!(entries_[i].snr_floor_db > entries_[i - 1].snr_floor_db) ||
        entries_[i].cqi_index != entries_[i - 1].cqi_index + 1) {
      throw Error("CQI table rows must be strictly increasing (row " + std::to_string(i) + ")");
    }
    if (entries_[i].modulation_bits <= 0 || entries_[i].code_rate_x1024 <= 0) {
      throw Error("CQI table row " + std::to_string(i) + " must have a positive rate");
    }
  }
}

const CqiTable& CqiTable::standard() {
  static const CqiTable table({
      {-std::numeric_limits<double>::infinity(), 0, 0, 0},
      {-6.9360, 1, 2, 78},
      {-5.1470, 2, 2, 120},
      {-3.1800, 3, 2, 193},
      {-1.2530, 4, 2, 308},
      {0.7610, 5, 2, 449},
      {2.6990, 6, 2, 602},
      {4.6940, 7, 4, 378},
      {6.5250, 8, 4, 490},
      {8.5730, 9, 4, 616},
      {10.3660, 10, 6, 466},
      {12.2890, 11, 6, 567},
      {14.1730, 12, 6, 666},
      {15.8880, 13, 6, 772},
      {17.8140, 14, 6, 873},
      {19.8290, 15, 6, 948},
  });
  return table;
}

CqiTable CqiTable::parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<CqiEntry> rows;
  int line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream fields(line);
    std::string snr, cqi, bits, rate;
    if (!std::getline(fields, snr, ',') || !std::getline(fields, cqi, ',') ||
        !std::getline(fields, bits, ',') || !std::getline(fields, rate, ',')) {
      throw Error("CQI table line " + std::to_string(line_no) + ": expected 4 fields");
    }
    try {
      CqiEntry e{};
      e.snr_floor_db = (snr == "-inf") ? -std::numeric_limits<double>::infinity() : std::stod(snr);
      e.cqi_index = std::stoi(cqi);
      e.modulation_bits = std::stoi(bits);
      e.code_rate_x1024 = std::stoi(rate);
      rows.push_back(e);
    } catch (const std::exception&) {
      throw Error("CQI table line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return CqiTable(std::move(rows));
}

CqiTable CqiTable::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CQI table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

int CqiTable::cqi_for(double sinr_db) const {
  // First row whose floor exceeds sinr; the one before it is the answer.
  const auto it = std::upper_bound(entries_.begin() + 1, entries_.end(), sinr_db,
                                   [](double v, const CqiEntry& e) { return v < e.snr_floor_db; });
  return std::prev(it)->cqi_index;
}

double CqiTable::rate_bps(int cqi, double bandwidth_hz) const {
  if (cqi < 0 || cqi > max_cqi()) throw Error("CQI index out of range: " + std::to_string(cqi));
  const CqiEntry& e = entries_[static_cast<std::size_t>(cqi)];
  return bandwidth_hz * e.modulation_bits * (e.code_rate_x1024 / 1024.0);
}

double sinr_db(std::size_t serving, std::span<const double> powers_dbm,
               std::span<const double> pathloss_db, const RadioParams& params) {
  const double gains = params.tx_gain_db + params.rx_gain_db;
  const double signal = units::dbm_to_mw(powers_dbm[serving] + gains - pathloss_db[serving]);
  double denom = units::dbm_to_mw(params.noise_power_dbm);
  for (std::size_t i = 0; i < powers_dbm.size(); ++i) {
    if (i == serving || !std::isfinite(powers_dbm[i])) continue;
    denom += units::dbm_to_mw(powers_dbm[i] + gains - pathloss_db[i]);
  }
  return units::linear_to_db(signal / denom);
}

int Attachment::ues_on(std::size_t cell) const {
  return static_cast<int>(std::count(serving.begin(), serving.end(), static_cast<int>(cell)));
}

PathGains compute_path_gains(std::span<const geometry::Vec3> ue_positions,
                             const geometry::RoomLayout& layout, const RadioParams& params) {
  PathGains g;
  g.n_cells = layout.cells.size();
  g.n_ues = ue_positions.size();
  const std::size_t total = g.n_cells * g.n_ues;
  g.distance_m.resize(total);
  g.los.resize(total);
  g.pathloss_db.resize(total);
  for (std::size_t m = 0; m < g.n_cells; ++m) {
    for (std::size_t n = 0; n < g.n_ues; ++n) {
      const std::size_t k = g.index(m, n);
      g.distance_m[k] = geometry::distance(layout.cells[m], ue_positions[n]);
      g.los[k] = geometry::has_los(layout.cells[m], ue_positions[n], layout) ? 1 : 0;
      g.pathloss_db[k] = pathloss_db(g.distance_m[k], g.los[k] != 0, params);
    }
  }
  return g;
}

Attachment attach_ues(const PathGains& gains, std::span<const double> powers_dbm,
                      const RadioParams& params, const CqiTable& table) {
  if (gains.n_cells == 0) throw Error("attach_ues: at least one cell is required");
  if (powers_dbm.size() != gains.n_cells) throw Error("attach_ues: one power per cell required");
  Attachment a;
  a.n_cells = gains.n_cells;
  a.n_ues = gains.n_ues;
  a.serving.assign(a.n_ues, 0);
  a.links.resize(a.n_cells * a.n_ues);
  a.ue_rate_bps.assign(a.n_ues, 0.0);

  std::vector<double> pl(a.n_cells);
  for (std::size_t n = 0; n < a.n_ues; ++n) {
    for (std::size_t m = 0; m < a.n_cells; ++m) pl[m] = gains.pathloss_db[gains.index(m, n)];
    int best = 0;
    for (std::size_t m = 0; m < a.n_cells; ++m) {
      const std::size_t k = gains.index(m, n);
      LinkState& ls = a.links[k];
      ls.distance_m = gains.distance_m[k];
      ls.los = gains.los[k] != 0;
      ls.pathloss_db = pl[m];
      ls.rsrp_dbm = rsrp_dbm(powers_dbm[m], pl[m], params);
      ls.sinr_db = sinr_db(m, powers_dbm, pl, params);
      ls.cqi = table.cqi_for(ls.sinr_db);
      ls.rate_bps = table.rate_bps(ls.cqi, params.bandwidth_hz);
      if (ls.rsrp_dbm > a.links[gains.index(best, n)].rsrp_dbm) best = static_cast<int>(m);
    }
    a.serving[n] = best;
    a.ue_rate_bps[n] = a.links[gains.index(best, n)].rate_bps;
  }
  return a;
}

Attachment attach_ues(std::span<const geometry::Vec3> ue_positions,
                      const geometry::RoomLayout& layout, std::span<const double> powers_dbm,
                      const RadioParams& params, const CqiTable& table) {
  return attach_ues(compute_path_gains(ue_positions, layout, params), powers_dbm, params, table);
}

}  // namespace fedcell::radio
