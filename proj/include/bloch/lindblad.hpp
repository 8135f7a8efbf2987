// lindblad.hpp — exact single-band density-matrix evolution
//     d rho/dt = -(i/hbar)[H, rho] - gamma (1 - delta_{nm}) rho_{nm}
// and the closed-form stationary estimates that follow from it.
//
// Matrix elements are stored as rho(n, m) = <n|rho|m> with n, m lattice
// indices relative to TBParams::first_site(). Dense storage: memory is
// O(N^2) and N is capped at kMaxMasterSites.
#pragma once

#include "bloch/core.hpp"
#include "bloch/tight_binding.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace bloch {

inline constexpr int kMaxMasterSites = 512;

struct SingleBandDensityMatrix {
    CMatrix rho;
    double t = 0.0;

    Eigen::Index sites() const noexcept { return rho.rows(); }
    double trace() const { return rho.trace().real(); }
    double hermiticity_defect() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
};

inline SingleBandDensityMatrix pure_density_matrix(const LatticeState& s) {
    const CVector psi = s.psi / s.psi.norm();
    return {psi * psi.adjoint(), 0.0};
}

inline void validate_density_matrix(const SingleBandDensityMatrix& r, double tol = 1e-10) {
    require(r.rho.rows() == r.rho.cols() && r.rho.rows() >= 3, "density matrix must be square with N >= 3");
    require(r.rho.rows() <= kMaxMasterSites, "density matrix exceeds the N <= 512 storage cap");
    require(std::abs(r.trace() - 1.0) <= tol, "density matrix must have unit trace");
    require(r.hermiticity_defect() <= tol, "density matrix must be Hermitian");
    require(r.min_eigenvalue() >= -1e-8, "density matrix must be positive semidefinite");
}

struct MasterEquationOptions {
    std::size_t record_every = 1;
    bool monitor_positivity = false;  // eigen-decomposition at each recorded step
    double drift_tolerance = 1e-8;
};

// Integrates with classical RK4 in the frame co-moving with the Stark phases
// (rho'_{nm} = exp(i omega_B (n-m) tau) rho_{nm} over each step), where the
// remaining generator is the hopping commutator plus the dephasing term.
// Returns snapshots every options.record_every steps, including t = 0.
class MasterEquation {
public:
    MasterEquation(TBParams params, double dt) : p_(std::move(params)), dt_(dt) {
        p_.validate();
        require(p_.sites <= kMaxMasterSites, "master equation limited to N <= 512 sites");
        require(finite(dt) && dt > 0.0, "time step must be positive");
        const double w = p_.bloch_frequency();
        for (int stage = 0; stage < 3; ++stage) {
            const double tau = 0.5 * dt_ * stage;
            coupling_[stage].resize(p_.range());
            for (int s = 1; s <= p_.range(); ++s)
                coupling_[stage][s - 1] = std::polar(-0.5 * p_.hopping_at(s) / p_.hbar, -w * s * tau);
        }
        const int n = p_.sites;
        CVector ph(n);
        for (int i = 0; i < n; ++i) ph[i] = std::polar(1.0, -w * (p_.first_site() + i) * dt_);
        stark_ = ph * ph.adjoint();
    }

    const TBParams& params() const noexcept { return p_; }
    double dt() const noexcept { return dt_; }
    double max_rate() const { return std::max({std::abs(p_.bloch_frequency()), p_.gamma, tb_bandwidth(p_) / p_.hbar}); }

    void step(CMatrix& rho) const {
        const double h = dt_;
        rhs(0, rho, k1_);
        tmp_ = rho + 0.5 * h * k1_;
        rhs(1, tmp_, k2_);
        tmp_ = rho + 0.5 * h * k2_;
        rhs(1, tmp_, k3_);
        tmp_ = rho + h * k3_;
        rhs(2, tmp_, k4_);
        rho.array() = (rho.array() + (h / 6.0) * (k1_.array() + 2.0 * (k2_.array() + k3_.array()) + k4_.array())) *
                      stark_.array();
    }

    std::vector<SingleBandDensityMatrix> evolve(const SingleBandDensityMatrix& rho0, double duration,
                                                const MasterEquationOptions& opt = {}) const {
        std::vector<SingleBandDensityMatrix> out;
        evolve(rho0, duration, opt, [&](const SingleBandDensityMatrix& r) { out.push_back(r); });
        return out;
    }

    // Streams each recorded snapshot to `sink` instead of storing it.
    void evolve(const SingleBandDensityMatrix& rho0, double duration, const MasterEquationOptions& opt,
                const std::function<void(const SingleBandDensityMatrix&)>& sink) const {
        validate_density_matrix(rho0);
        require(rho0.rho.rows() == p_.sites, "density matrix size does not match the lattice");
        require(dt_ * max_rate() <= 0.05 * (1.0 + 1e-12), "time step violates the dt guard");
        require(opt.record_every >= 1, "record stride must be positive");
        const auto steps = static_cast<std::size_t>(std::llround(duration / dt_));
        SingleBandDensityMatrix snap{rho0.rho, rho0.t};
        sink(snap);
        CMatrix& rho = snap.rho;
        for (std::size_t n = 1; n <= steps; ++n) {
            step(rho);
            const double t = rho0.t + static_cast<double>(n) * dt_;
            const double drift = std::abs(rho.trace().real() - 1.0);
            if (!(drift <= opt.drift_tolerance))
                throw NumericalAbort("master equation trace drift " + std::to_string(drift) + " at t=" +
                                     std::to_string(t));
            if (n % opt.record_every == 0 || n == steps) {
                snap.t = t;
                const double herm = snap.hermiticity_defect();
                if (!(herm <= opt.drift_tolerance))
                    throw NumericalAbort("master equation lost Hermiticity (" + std::to_string(herm) + ") at t=" +
                                         std::to_string(t));
                if (opt.monitor_positivity && snap.min_eigenvalue() < -1e-8)
                    throw NumericalAbort("density matrix lost positivity at t=" + std::to_string(t));
                sink(snap);
            }
        }
    }

private:
    // k = -i [H', r] - gamma (r - diag r), assembled shift by shift.
    void rhs(int stage, const CMatrix& r, CMatrix& k) const {
        const auto n = r.rows();
        const auto& c = coupling_[stage];
        const double g = p_.gamma;
        const cplx a = -I * c[0], b = -I * std::conj(c[0]);
        k.resize(n, n);
        k.topRows(n - 1) = a * r.bottomRows(n - 1) - g * r.topRows(n - 1);
        k.row(n - 1) = -g * r.row(n - 1);
        k.bottomRows(n - 1) += b * r.topRows(n - 1);
        k.rightCols(n - 1) -= a * r.leftCols(n - 1);
        k.leftCols(n - 1) -= b * r.rightCols(n - 1);
        for (int s = 2; s <= p_.range(); ++s) {
            const cplx fa = -I * c[s - 1], fb = -I * std::conj(c[s - 1]);
            const auto m = n - s;
            k.topRows(m) += fa * r.bottomRows(m);
            k.bottomRows(m) += fb * r.topRows(m);
            k.rightCols(m) -= fa * r.leftCols(m);
            k.leftCols(m) -= fb * r.rightCols(m);
        }
        k.diagonal() += g * r.diagonal();
    }

    TBParams p_;
    double dt_;
    std::array<std::vector<cplx>, 3> coupling_;
    CMatrix stark_;
    mutable CMatrix k1_, k2_, k3_, k4_, tmp_;
};

inline std::vector<SingleBandDensityMatrix> evolve_master_equation(const SingleBandDensityMatrix& rho0,
                                                                   const TBParams& params, double duration,
                                                                   double dt, const MasterEquationOptions& opt = {}) {
    return MasterEquation(params, dt).evolve(rho0, duration, opt);
}

struct DensityObservables {
    double velocity, position, position_sq, velocity_sq;
};

// Tr(A rho) = sum_ij A_ij rho_ji with v and v^2 precomputed: O(N^2) per call.
class DensityObserver {
public:
    explicit DensityObserver(const TBParams& p)
        : v_(velocity_operator_tb(p)), v2_(v_ * v_), z_(position_operator_tb(p)) {}

    DensityObservables operator()(const SingleBandDensityMatrix& r) const {
        DensityObservables o{};
        o.velocity = v_.cwiseProduct(r.rho.transpose()).sum().real();
        o.velocity_sq = v2_.cwiseProduct(r.rho.transpose()).sum().real();
        const RVector pop = r.rho.diagonal().real();
        o.position = z_.dot(pop);
        o.position_sq = z_.array().square().matrix().dot(pop);
        return o;
    }

private:
    CMatrix v_, v2_;
    RVector z_;
};

inline DensityObservables density_observables(const SingleBandDensityMatrix& r, const TBParams& p) {
    return DensityObserver(p)(r);
}

// Stationary nearest off-diagonal <n+1|rho|n> for the Hamiltonian of
// build_tb_hamiltonian, given populations rho_{n,n} and rho_{n+1,n+1}:
//     (i Delta / 2 hbar) (rho_{n,n} - rho_{n+1,n+1}) / (i omega_B + gamma).
inline cplx stationary_offdiagonal_estimate(double pop_lower, double pop_upper, const TBParams& p) {
    const cplx denom = I * p.bloch_frequency() + p.gamma;
    return (I * p.hopping / (2.0 * p.hbar)) * (pop_lower - pop_upper) / denom;
}

// Nearest-neighbour population exchange rate of the diagonal rate equation,
// (Delta / 2 hbar)^2 * 2 gamma / (omega_B^2 + gamma^2).
inline double hopping_rate(double hopping, double hbar, double gamma, double omega_b) {
    const double h = hopping / (2.0 * hbar);
    const double den = omega_b * omega_b + gamma * gamma;
    if (den == 0.0) return 0.0;
    return h * h * 2.0 * gamma / den;
}

// D = 2 v_st^2 gamma / (omega_B^2 + gamma^2); <dz^2> ~ D t.
inline double diffusion_coefficient(double v_st_sq, double gamma, double omega_b) {
    require(gamma >= 0.0, "emission rate must be non-negative");
    if (gamma == 0.0) return 0.0;
    return 2.0 * v_st_sq * gamma / (omega_b * omega_b + gamma * gamma);
}

inline double stationary_velocity_sq(const TBParams& p) {
    const double v0 = p.period * p.hopping / p.hbar;
    return 0.5 * v0 * v0;
}

inline double diffusion_coefficient(const TBParams& p) {
    return diffusion_coefficient(stationary_velocity_sq(p), p.gamma, p.bloch_frequency());
}

// Sum_n |rho_{n,n+k}| for k = 0 .. N-1.
inline std::vector<double> offdiagonal_mass_profile(const SingleBandDensityMatrix& r) {
    const auto n = r.rho.rows();
    std::vector<double> prof(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index k = 0; k < n; ++k) prof[k] = r.rho.diagonal(k).cwiseAbs().sum();
    return prof;
}

// Dense dump: first line "N t", then N rows of 2N numbers (re im pairs, row-major).
inline void write_density_dump(std::ostream& os, const SingleBandDensityMatrix& r) {
    const auto n = r.rho.rows();
    os << n << ' ' << std::setprecision(17) << r.t << '\n';
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j) os << ' ';
            os << r.rho(i, j).real() << ' ' << r.rho(i, j).imag();
        }
        os << '\n';
    }
}

inline SingleBandDensityMatrix read_density_dump(std::istream& is) {
    Eigen::Index n = 0;
    SingleBandDensityMatrix r;
    if (!(is >> n >> r.t) || n <= 0) throw ConfigError("malformed density dump header");
    r.rho.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double re = 0.0, im = 0.0;
            if (!(is >> re >> im)) throw ConfigError("truncated density dump");
            r.rho(i, j) = {re, im};
        }
    return r;
}

}  // namespace bloch
