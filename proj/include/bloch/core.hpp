// core.hpp — shared numeric aliases, error types and small helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bloch {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

inline constexpr const char* version_string = "bloch 1.0.0";

// Invalid parameters or configuration detected before any compute starts.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical breakdown during a run (overflow, edge contact, invariant drift).
class NumericalAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

inline bool finite(double x) noexcept { return std::isfinite(x); }

inline bool all_finite(const CVector& v) noexcept {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) return false;
    return true;
}

// Trapezoid weight helper for sample k of a closed window [first, last].
inline double trapezoid_weight(std::size_t k, std::size_t first, std::size_t last) noexcept {
    return (k == first || k == last) ? 0.5 : 1.0;
}

}  // namespace bloch
