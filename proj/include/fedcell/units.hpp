#pragma once

#include <cmath>
#include <limits>

// All dB / dBm / linear conversions go through here.
namespace fedcell::units {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double ratio) {
  if (ratio <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ratio);
}

inline double dbm_to_mw(double dbm) {
  if (std::isinf(dbm) && dbm < 0) return 0.0;
  return db_to_linear(dbm);
}

inline double mw_to_dbm(double mw) { return linear_to_db(mw); }

inline double bps_to_mbps(double bps) { return bps * 1e-6; }

}  // namespace fedcell::units
