#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gridtrip {

using Complex = std::complex<double>;

/// Bad user input: malformed fixture, invalid selector, inconsistent parameters.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File system or parse failure.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solver failure: non-convergence, singular matrix, non-finite state.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double clamp01(double x) { return std::max(0.0, std::min(1.0, x)); }

/// Exact zero-order-hold update factor of a first-order lag; a non-positive
/// time constant means pass-through.
inline double lag_factor(double dt, double time_constant) {
    return time_constant > 0.0 ? 1.0 - std::exp(-dt / time_constant) : 1.0;
}

/// Inverter population, keyed by the grid code it was certified against.
enum class DerCode : int { inv2005 = 0, inv2015 = 1, inv2020 = 2 };

inline constexpr std::array<DerCode, 3> kAllCodes{DerCode::inv2005, DerCode::inv2015,
                                                  DerCode::inv2020};

/// Installed-capacity shares of the three inverter populations.
inline constexpr std::array<double, 3> kDefaultShares{0.15, 0.5, 0.35};

inline std::size_t code_index(DerCode c) { return static_cast<std::size_t>(c); }

std::string to_string(DerCode c);
DerCode parse_code(std::string_view s);

enum class Side { under, over };

std::string to_string(Side s);
Side parse_side(std::string_view s);

/// Worker count for internal parallel loops, capped by GRIDTRIP_THREADS.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. The first
/// exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace gridtrip
