// tight_binding.hpp — single-band Wannier lattice: Hamiltonian, recoil and
// velocity operators, coherent Bloch reference and the per-trajectory model
// used by the stochastic engine.
#pragma once

#include "bloch/core.hpp"
#include "bloch/observables.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bloch {

struct TBParams {
    double hopping = 1.0;                 // Delta, nearest-neighbour
    double period = pi;                   // d
    double hbar = 1.0;
    double force = 0.0;                   // F
    double gamma = 0.0;                   // spontaneous emission rate
    int sites = 201;                      // N
    std::vector<double> longer_hoppings;  // Delta_2, Delta_3, ...

    double bloch_frequency() const noexcept { return period * force / hbar; }
    int first_site() const noexcept { return -(sites / 2); }
    int range() const noexcept { return 1 + static_cast<int>(longer_hoppings.size()); }

    // Delta_s for s >= 1.
    double hopping_at(int s) const noexcept {
        if (s == 1) return hopping;
        if (s >= 2 && s - 2 < static_cast<int>(longer_hoppings.size())) return longer_hoppings[s - 2];
        return 0.0;
    }

    std::vector<double> hoppings() const {
        std::vector<double> h{hopping};
        h.insert(h.end(), longer_hoppings.begin(), longer_hoppings.end());
        return h;
    }

    void validate() const {
        require(sites >= 3, "tight-binding lattice needs at least 3 sites");
        require(finite(hopping) && finite(period) && finite(hbar) && finite(force) && finite(gamma),
                "tight-binding parameters must be finite");
        require(period > 0.0, "lattice period must be positive");
        require(hbar > 0.0, "hbar must be positive");
        require(gamma >= 0.0, "emission rate must be non-negative");
        require(range() < sites, "hopping range exceeds the lattice");
        for (double h : longer_hoppings) require(finite(h), "hopping coefficients must be finite");
    }
};

struct LatticeState {
    CVector psi;
    int origin = 0;  // label l of psi[0]

    double norm() const { return psi.squaredNorm(); }
    int site(Eigen::Index i) const noexcept { return origin + static_cast<int>(i); }
};

// epsilon(kappa) = -sum_s Delta_s cos(s d kappa)
inline double tb_dispersion(std::span<const double> hoppings, double period, double kappa) {
    double e = 0.0;
    for (std::size_t s = 0; s < hoppings.size(); ++s)
        e -= hoppings[s] * std::cos(static_cast<double>(s + 1) * period * kappa);
    return e;
}

// Full width of the band spanned by tb_dispersion over one Brillouin zone.
inline double tb_bandwidth(const TBParams& p) {
    const auto h = p.hoppings();
    double lo = 1e300, hi = -1e300;
    constexpr int samples = 1024;
    for (int k = 0; k < samples; ++k) {
        const double kappa = (-1.0 + 2.0 * k / samples) * pi / p.period;
        const double e = tb_dispersion(h, p.period, kappa);
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    return hi - lo;
}

inline CMatrix build_tb_hamiltonian(const TBParams& p) {
    p.validate();
    const int n = p.sites;
    CMatrix h = CMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int l = p.first_site() + i;
        h(i, i) = p.period * p.force * l;
        for (int s = 1; s <= p.range(); ++s) {
            if (i + s < n) {
                h(i, i + s) = -0.5 * p.hopping_at(s);
                h(i + s, i) = -0.5 * p.hopping_at(s);
            }
        }
    }
    return h;
}

// Diagonal of L_u: (-1)^l exp(i pi u l). Unitary for every admissible u.
inline CVector recoil_operator_tb(double u, int sites, int origin) {
    require(std::abs(u) <= 1.0, "recoil projection u must satisfy |u| <= 1");
    require(sites >= 1, "recoil operator needs at least one site");
    CVector d(sites);
    for (int i = 0; i < sites; ++i) {
        const int l = origin + i;
        d[i] = std::polar(1.0, pi * (1.0 + u) * l);
    }
    return d;
}

inline CVector recoil_operator_tb(double u, int sites) { return recoil_operator_tb(u, sites, -(sites / 2)); }

// v_{l,l+s} = -i s d Delta_s / (2 hbar), Hermitian.
inline CMatrix velocity_operator_tb(const TBParams& p) {
    p.validate();
    const int n = p.sites;
    CMatrix v = CMatrix::Zero(n, n);
    for (int s = 1; s <= p.range(); ++s) {
        const double a = s * p.period * p.hopping_at(s) / (2.0 * p.hbar);
        for (int i = 0; i + s < n; ++i) {
            v(i, i + s) = -I * a;
            v(i + s, i) = I * a;
        }
    }
    return v;
}

inline RVector position_operator_tb(const TBParams& p) {
    RVector z(p.sites);
    for (int i = 0; i < p.sites; ++i) z[i] = p.period * (p.first_site() + i);
    return z;
}

struct BlochReference {
    double velocity;
    double position;
};

// Coherent single-band oscillation of a narrow-quasimomentum packet under
// H = ... + F z. The quasimomentum runs as -F t / hbar, so the velocity
// starts with the sign of -F; the position is given up to a constant.
inline BlochReference coherent_bloch_reference(const TBParams& p, double t) {
    require(t >= 0.0, "time must be non-negative");
    require(p.force != 0.0, "coherent reference position is undefined for F = 0");
    const double w = p.bloch_frequency();
    return {-p.period * p.hopping / p.hbar * std::sin(w * t), p.hopping / p.force * std::cos(w * t)};
}

// psi_l ∝ exp(-(l - center)^2 / width^2), normalized; width = 10 gives exp(-l^2/100).
inline LatticeState gaussian_wannier_packet(const TBParams& p, double width = 10.0, double center = 0.0) {
    require(width > 0.0, "packet width must be positive");
    LatticeState s{CVector(p.sites), p.first_site()};
    for (int i = 0; i < p.sites; ++i) {
        const double x = (s.site(i) - center) / width;
        s.psi[i] = std::exp(-x * x);
    }
    s.psi /= s.psi.norm();
    return s;
}

// Normalized Bloch wave exp(i d kappa l).
inline LatticeState bloch_wave(const TBParams& p, double kappa) {
    LatticeState s{CVector(p.sites), p.first_site()};
    for (int i = 0; i < p.sites; ++i) s.psi[i] = std::polar(1.0, p.period * kappa * s.site(i));
    s.psi /= s.psi.norm();
    return s;
}

struct HoppingExpansion {
    double mean = 0.0;             // band centre E_0
    std::vector<double> hoppings;  // Delta_1, Delta_2, ...
};

// Fourier coefficients of a dispersion sampled on a uniform grid covering one
// period, epsilon(kappa_k) = E_0 - sum_s Delta_s cos(s d kappa_k). The series
// stops at the first coefficient below rel_cutoff * |Delta_1|.
inline HoppingExpansion hoppings_from_dispersion(std::span<const double> kappa, std::span<const double> energy,
                                                 double period, double rel_cutoff = 1e-6,
                                                 int max_range = 0) {
    require(kappa.size() == energy.size() && kappa.size() >= 4, "dispersion needs at least 4 samples");
    const std::size_t n = kappa.size();
    HoppingExpansion out;
    for (double e : energy) out.mean += e;
    out.mean /= static_cast<double>(n);
    const int smax = max_range > 0 ? max_range : static_cast<int>(n / 2) - 1;
    double scale = 0.0;
    for (double e : energy) scale = std::max(scale, std::abs(e - out.mean));
    double leading = 0.0;
    for (int s = 1; s <= smax; ++s) {
        double c = 0.0;
        for (std::size_t k = 0; k < n; ++k) c += energy[k] * std::cos(s * period * kappa[k]);
        const double delta = -2.0 * c / static_cast<double>(n);
        if (s == 1) {
            leading = std::abs(delta);
            if (leading <= 1e-14 * scale || scale == 0.0) {
                out.hoppings.push_back(0.0);  // flat band
                break;
            }
            out.hoppings.push_back(delta);
            continue;
        }
        if (std::abs(delta) < rel_cutoff * leading) break;
        out.hoppings.push_back(delta);
    }
    return out;
}

inline TBParams with_hoppings(TBParams p, std::span<const double> hoppings) {
    require(!hoppings.empty(), "hopping list must not be empty");
    p.hopping = hoppings[0];
    p.longer_hoppings.assign(hoppings.begin() + 1, hoppings.end());
    return p;
}

// Lattice size that keeps a packet of initial width sigma0 (sites) clear of the
// edges by `margin` sites for the given duration.
inline int recommended_sites(const TBParams& p, double duration, double sigma0 = 5.0, int margin = 10) {
    const double w = p.bloch_frequency();
    const double v0 = p.period * std::abs(p.hopping) / p.hbar;
    const double width = tb_bandwidth(p);
    double excursion = (p.force != 0.0) ? width / std::abs(p.force * p.period) : v0 * duration / p.period;
    excursion = std::min(excursion, v0 * duration / p.period);
    double diff_sites = 0.0;  // <dz^2> growth in sites^2 per unit time
    if (p.gamma > 0.0) diff_sites = v0 * v0 * p.gamma / (w * w + p.gamma * p.gamma) / (p.period * p.period);
    const double sigma = std::sqrt(sigma0 * sigma0 + diff_sites * duration);
    const int half = static_cast<int>(std::ceil(excursion + 6.0 * sigma)) + margin + 2;
    return 2 * half + 1;
}

// Per-trajectory lattice model. Immutable after construction and safe to
// share across threads; scratch space lives in Workspace.
class TightBindingModel {
public:
    using State = LatticeState;

    struct Workspace {
        CVector k1, k2, k3, k4, tmp, recoil;
    };

    TightBindingModel(TBParams params, double dt, int edge_margin = 10, double edge_tolerance = 1e-6)
        : p_(std::move(params)), dt_(dt), edge_margin_(edge_margin), edge_tolerance_(edge_tolerance) {
        p_.validate();
        require(dt > 0.0 && finite(dt), "time step must be positive");
        const int range = p_.range();
        const double w = p_.bloch_frequency();
        for (int stage = 0; stage < 3; ++stage) {
            const double tau = 0.5 * dt_ * stage;
            coupling_[stage].resize(range);
            for (int s = 1; s <= range; ++s)
                coupling_[stage][s - 1] = std::polar(-0.5 * p_.hopping_at(s) / p_.hbar, -w * s * tau);
        }
        stark_phase_.resize(p_.sites);
        for (int i = 0; i < p_.sites; ++i) stark_phase_[i] = std::polar(1.0, -w * (p_.first_site() + i) * dt_);
        velocity_coeff_.resize(range);
        for (int s = 1; s <= range; ++s) velocity_coeff_[s - 1] = s * p_.period * p_.hopping_at(s) / (2.0 * p_.hbar);
        recoil_weight_ = RVector::Ones(p_.sites);
    }

    const TBParams& params() const noexcept { return p_; }
    double dt() const noexcept { return dt_; }
    double gamma() const noexcept { return p_.gamma; }
    Eigen::Index size() const noexcept { return p_.sites; }
    double max_rate() const { return std::max({std::abs(p_.bloch_frequency()), p_.gamma, tb_bandwidth(p_) / p_.hbar}); }
    double bloch_period() const noexcept {
        const double w = std::abs(p_.bloch_frequency());
        return w > 0.0 ? 2.0 * pi / w : 0.0;
    }

    Workspace make_workspace() const {
        const auto n = p_.sites;
        return {CVector(n), CVector(n), CVector(n), CVector(n), CVector(n), CVector(n)};
    }

    // Coherent step over dt. Integrated in the frame co-moving with the Stark
    // phases, where only the (time-dependent) hopping remains, then rotated back.
    void propagate(State& s, Workspace& w) const {
        const double h = dt_;
        rhs(0, s.psi, w.k1);
        w.tmp = s.psi + 0.5 * h * w.k1;
        rhs(1, w.tmp, w.k2);
        w.tmp = s.psi + 0.5 * h * w.k2;
        rhs(1, w.tmp, w.k3);
        w.tmp = s.psi + h * w.k3;
        rhs(2, w.tmp, w.k4);
        s.psi.array() = (s.psi.array() + (h / 6.0) * (w.k1.array() + 2.0 * (w.k2.array() + w.k3.array()) + w.k4.array())) *
                        stark_phase_.array();
    }

    // l_l(u) = (-1)^l exp(i pi u l) built by recurrence.
    void fill_recoil(double u, CVector& out) const {
        const cplx step = std::polar(1.0, pi * (1.0 + u));
        cplx f = std::polar(1.0, pi * (1.0 + u) * p_.first_site());
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            out[i] = f;
            f *= step;
        }
    }

    const RVector& recoil_weight() const noexcept { return recoil_weight_; }

    Sample observe(const State& s, Workspace& w) const {
        Sample out{};
        const auto n = s.psi.size();
        double norm = 0.0, z = 0.0, z2 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double rho = std::norm(s.psi[i]);
            const double x = p_.period * s.site(i);
            norm += rho;
            z += x * rho;
            z2 += x * x * rho;
        }
        apply_velocity(s.psi, w.tmp);
        out[kNorm] = norm;
        out[kSurvival] = norm;
        out[kPosition] = z;
        out[kPositionSq] = z2;
        out[kVelocity] = s.psi.dot(w.tmp).real();
        out[kVelocitySq] = w.tmp.squaredNorm();
        return out;
    }

    void apply_velocity(const CVector& psi, CVector& out) const {
        const auto n = psi.size();
        out.setZero(n);
        for (int s = 1; s <= p_.range(); ++s) {
            const double a = velocity_coeff_[s - 1];
            const auto m = n - s;
            out.head(m) += (-I * a) * psi.tail(m);
            out.tail(m) += (I * a) * psi.head(m);
        }
    }

    // Aborts when the packet approaches a hard wall.
    void check(const State& s) const {
        if (!all_finite(s.psi)) throw NumericalAbort("non-finite lattice amplitudes");
        if (edge_margin_ <= 0) return;
        const auto n = s.psi.size();
        const auto m = std::min<Eigen::Index>(edge_margin_, n / 2);
        const double edge = s.psi.head(m).squaredNorm() + s.psi.tail(m).squaredNorm();
        const double total = s.psi.squaredNorm();
        if (edge > edge_tolerance_ * total)
            throw NumericalAbort("packet reached the lattice edge (population " + std::to_string(edge / total) +
                                 " within " + std::to_string(m) + " sites); increase the site count");
    }

private:
    // k = -i H'(tau_stage) psi in the co-moving frame.
    void rhs(int stage, const CVector& psi, CVector& k) const {
        const auto n = psi.size();
        const auto& c = coupling_[stage];
        k.head(n - 1) = (-I * c[0]) * psi.tail(n - 1);
        k[n - 1] = 0.0;
        k.tail(n - 1) += (-I * std::conj(c[0])) * psi.head(n - 1);
        for (int s = 2; s <= p_.range(); ++s) {
            const cplx fwd = -I * c[s - 1];
            const cplx back = -I * std::conj(c[s - 1]);
            const auto m = n - s;
            k.head(m) += fwd * psi.tail(m);
            k.tail(m) += back * psi.head(m);
        }
    }

    TBParams p_;
    double dt_;
    int edge_margin_;
    double edge_tolerance_;
    std::array<std::vector<cplx>, 3> coupling_;
    CVector stark_phase_;
    std::vector<double> velocity_coeff_;
    RVector recoil_weight_;
};

}  // namespace bloch
