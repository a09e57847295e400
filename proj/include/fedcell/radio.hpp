#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "fedcell/geometry.hpp"

namespace fedcell::radio {

struct RadioParams {
  double bandwidth_hz = 20e6;
  double carrier_ghz = 3.5;
  double tx_gain_db = 0.0;
  double rx_gain_db = 0.0;
  double noise_power_dbm = -101.0;  // kTB over 20 MHz, no noise figure
  double ue_height_m = 1.0;
};

void validate(const RadioParams& params);

/// Indoor-hotspot path loss (LoS / NLoS) in dB. f_c in GHz; d3d is clamped
/// to at least 1 m.
double pathloss_db(double d3d, bool los, const RadioParams& params);

struct CqiEntry {
  double snr_floor_db;
  int cqi_index;
  int modulation_bits;
  int code_rate_x1024;
};

/// SINR-to-CQI-to-rate lookup. Row 0 is "out of range" with floor -inf.
class CqiTable {
 public:
  explicit CqiTable(std::vector<CqiEntry> entries);

  /// The 16-row 4-bit CQI table shipped in data/cqi_table.csv.
  static const CqiTable& standard();
  static CqiTable parse_csv(std::string_view text);
  static CqiTable load_csv(const std::filesystem::path& path);

  std::span<const CqiEntry> entries() const { return entries_; }
  int max_cqi() const { return entries_.back().cqi_index; }

  /// Largest index whose floor is <= sinr_db (floors are inclusive).
  int cqi_for(double sinr_db) const;
  double rate_bps(int cqi, double bandwidth_hz) const;

 private:
  std::vector<CqiEntry> entries_;
};

inline int sinr_to_cqi(double sinr_db, const CqiTable& table = CqiTable::standard()) {
  return table.cqi_for(sinr_db);
}

inline double cqi_to_rate_bps(int cqi, double bandwidth_hz,
                              const CqiTable& table = CqiTable::standard()) {
  return table.rate_bps(cqi, bandwidth_hz);
}

/// SINR in dB at one UE when served by `serving`. `powers_dbm[i]` and
/// `pathloss_db[i]` describe cell i as seen from that UE. Cells whose power
/// is -inf are switched off and contribute no interference.
double sinr_db(std::size_t serving, std::span<const double> powers_dbm,
               std::span<const double> pathloss_db, const RadioParams& params);

inline double rsrp_dbm(double power_dbm, double pathloss, const RadioParams& params) {
  return power_dbm + params.tx_gain_db + params.rx_gain_db - pathloss;
}

struct LinkState {
  double distance_m = 0.0;
  bool los = true;
  double pathloss_db = 0.0;
  double rsrp_dbm = 0.0;
  double sinr_db = 0.0;
  int cqi = 0;
  double rate_bps = 0.0;
};

/// Power-independent part of the link budget: distances, LoS flags and
/// path losses for every (cell, UE) pair, stored cell-major.
struct PathGains {
  std::size_t n_cells = 0;
  std::size_t n_ues = 0;
  std::vector<double> distance_m;
  std::vector<char> los;
  std::vector<double> pathloss_db;

  std::size_t index(std::size_t cell, std::size_t ue) const { return cell * n_ues + ue; }
};

PathGains compute_path_gains(std::span<const geometry::Vec3> ue_positions,
                             const geometry::RoomLayout& layout, const RadioParams& params);

struct Attachment {
  std::size_t n_cells = 0;
  std::size_t n_ues = 0;
  std::vector<int> serving;       // per UE
  std::vector<LinkState> links;   // cell-major, n_cells * n_ues
  std::vector<double> ue_rate_bps;

  const LinkState& link(std::size_t cell, std::size_t ue) const { return links[cell * n_ues + ue]; }
  int ues_on(std::size_t cell) const;
};

/// Max-RSRP attachment (ties go to the lowest cell index) plus the full
/// link matrix. Every attached UE gets the full-bandwidth rate of its
/// serving link.
Attachment attach_ues(const PathGains& gains, std::span<const double> powers_dbm,
                      const RadioParams& params, const CqiTable& table = CqiTable::standard());

Attachment attach_ues(std::span<const geometry::Vec3> ue_positions,
                      const geometry::RoomLayout& layout, std::span<const double> powers_dbm,
                      const RadioParams& params, const CqiTable& table = CqiTable::standard());

}  // namespace fedcell::radio
