#pragma once

#include <cmath>

namespace ipcnn::units {

inline constexpr double speed_of_light = 299'792'458.0;  // m/s

inline constexpr double kilo = 1e3;
inline constexpr double mega = 1e6;
inline constexpr double giga = 1e9;
inline constexpr double tera = 1e12;
inline constexpr double milli = 1e-3;
inline constexpr double micro = 1e-6;
inline constexpr double nano = 1e-9;
inline constexpr double pico = 1e-12;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }

// Transmission of a stage with the given insertion loss.
inline double loss_to_transmission(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

inline double dbm_to_watts(double dbm) { return milli * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / milli); }

}  // namespace ipcnn::units
