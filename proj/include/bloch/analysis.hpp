// analysis.hpp — classical recoil-kick ensemble and the statistical
// extractors: exponential decay rates, diffusion slopes, velocity
// autocorrelation and oscillation envelopes.
#pragma once

#include "bloch/core.hpp"
#include "bloch/rng.hpp"
#include "bloch/tight_binding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace bloch {

// ---------------------------------------------------------------- classical model

// Particles with H = -Delta cos(d p / hbar) + F z under random recoil kicks:
//     dp = -F dt + (hbar/d) sqrt(2 gamma) dW,   dz = (d Delta / hbar) sin(d p / hbar) dt.
// The momentum update is exact in distribution for any dt.
struct ClassicalEnsemble {
    TBParams params;
    std::vector<double> p;
    std::vector<double> z;
    double t = 0.0;

    static ClassicalEnsemble at_rest(const TBParams& params, std::size_t particles, double p0 = 0.0) {
        require(particles > 0, "classical ensemble must not be empty");
        return {params, std::vector<double>(particles, p0), std::vector<double>(particles, 0.0), 0.0};
    }

    std::size_t size() const noexcept { return p.size(); }

    double velocity_of(double momentum) const {
        return params.period * params.hopping / params.hbar * std::sin(params.period * momentum / params.hbar);
    }

    void step(double dt, TrajectoryRng& rng) {
        const double kick = params.hbar / params.period * std::sqrt(2.0 * params.gamma * dt);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double v_old = velocity_of(p[i]);
            p[i] += -params.force * dt + kick * rng.standard_normal();
            z[i] += 0.5 * dt * (v_old + velocity_of(p[i]));
        }
        t += dt;
    }

    void advance(double duration, double dt, TrajectoryRng& rng) {
        const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
        for (std::size_t n = 0; n < steps; ++n) step(dt, rng);
    }

    double mean_velocity() const {
        require(!p.empty(), "classical ensemble must not be empty");
        double s = 0.0;
        for (double x : p) s += velocity_of(x);
        return s / static_cast<double>(p.size());
    }

    double mean_velocity_sq() const {
        double s = 0.0;
        for (double x : p) s += velocity_of(x) * velocity_of(x);
        return s / static_cast<double>(p.size());
    }
};

struct ClassicalSeries {
    std::vector<double> t, velocity, velocity_err, velocity_sq, velocity_sq4, position, dispersion;
};

// Records ensemble statistics every `record_every` steps up to `duration`.
inline ClassicalSeries simulate_classical(ClassicalEnsemble e, double duration, double dt, std::uint64_t seed,
                                          std::size_t record_every = 1) {
    require(dt > 0.0 && duration >= 0.0, "invalid classical integration window");
    require(!e.p.empty(), "classical ensemble must not be empty");
    TrajectoryRng rng(seed);
    ClassicalSeries s;
    const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
    const double n = static_cast<double>(e.size());
    for (std::size_t k = 0;; ++k) {
        if (k % record_every == 0) {
            double v = 0.0, v2 = 0.0, v4 = 0.0, z = 0.0, z2 = 0.0;
            for (std::size_t i = 0; i < e.size(); ++i) {
                const double vi = e.velocity_of(e.p[i]);
                v += vi;
                v2 += vi * vi;
                v4 += vi * vi * vi * vi;
                z += e.z[i];
                z2 += e.z[i] * e.z[i];
            }
            v /= n;
            v2 /= n;
            v4 /= n;
            z /= n;
            z2 /= n;
            s.t.push_back(e.t);
            s.velocity.push_back(v);
            s.velocity_err.push_back(n > 1 ? std::sqrt(std::max(v2 - v * v, 0.0) / (n - 1.0)) : 0.0);
            s.velocity_sq.push_back(v2);
            s.velocity_sq4.push_back(v4);
            s.position.push_back(z);
            s.dispersion.push_back(z2 - z * z);
        }
        if (k == steps) break;
        e.step(dt, rng);
    }
    return s;
}

// Monte-Carlo <v(t)> of a copy of the ensemble advanced to time t.
inline double classical_mean_velocity(const ClassicalEnsemble& e, double t, double dt, std::uint64_t seed) {
    require(!e.p.empty(), "classical ensemble must not be empty");
    ClassicalEnsemble copy = e;
    TrajectoryRng rng(seed);
    copy.advance(t - e.t, dt, rng);
    return copy.mean_velocity();
}

// Closed form for a delta-distributed initial momentum p = 0:
// <v(t)> = -v0 exp(-gamma t) sin(omega_B t), the quantum lattice result.
inline double classical_decay_law(const TBParams& p, double t) {
    const double v0 = p.period * p.hopping / p.hbar;
    return -v0 * std::exp(-p.gamma * t) * std::sin(p.bloch_frequency() * t);
}

// ---------------------------------------------------------------- autocorrelation

struct Autocorrelation {
    std::vector<double> tau, value, err;
};

inline double predicted_autocorrelation(double v_st_sq, double gamma, double omega_b, double tau) {
    return v_st_sq * std::exp(-gamma * tau) * std::cos(omega_b * tau);
}

// R(tau) = <v(t0 + tau) v(t0)> over the classical ensemble, starting from its
// current (assumed stationary) state. Lags are rounded to multiples of dt.
inline Autocorrelation velocity_autocorrelation(const ClassicalEnsemble& e, std::span<const double> taus, double dt,
                                                std::uint64_t seed) {
    require(!e.p.empty(), "classical ensemble must not be empty");
    require(std::is_sorted(taus.begin(), taus.end()) && (taus.empty() || taus.front() >= 0.0),
            "lags must be sorted and non-negative");
    ClassicalEnsemble run = e;
    std::vector<double> v0(run.size());
    for (std::size_t i = 0; i < run.size(); ++i) v0[i] = run.velocity_of(run.p[i]);
    TrajectoryRng rng(seed);
    Autocorrelation out;
    std::size_t done = 0;
    const double n = static_cast<double>(run.size());
    for (double tau : taus) {
        const auto target = static_cast<std::size_t>(std::llround(tau / dt));
        for (; done < target; ++done) run.step(dt, rng);
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < run.size(); ++i) {
            const double x = v0[i] * run.velocity_of(run.p[i]);
            s += x;
            s2 += x * x;
        }
        const double m = s / n;
        out.tau.push_back(static_cast<double>(target) * dt);
        out.value.push_back(m);
        out.err.push_back(n > 1 ? std::sqrt(std::max(s2 / n - m * m, 0.0) / (n - 1.0)) : 0.0);
    }
    return out;
}

// Time-averaged R(k * sample_dt) of one stationary series.
inline Autocorrelation velocity_autocorrelation(std::span<const double> series, double sample_dt, std::size_t max_lag) {
    require(series.size() > max_lag + 1, "series too short for the requested lags");
    Autocorrelation out;
    for (std::size_t k = 0; k <= max_lag; ++k) {
        const std::size_t m = series.size() - k;
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = series[i] * series[i + k];
            s += x;
            s2 += x * x;
        }
        const double mean = s / m;
        out.tau.push_back(static_cast<double>(k) * sample_dt);
        out.value.push_back(mean);
        out.err.push_back(m > 1 ? std::sqrt(std::max(s2 / m - mean * mean, 0.0) / (m - 1.0)) : 0.0);
    }
    return out;
}

// Trapezoid integral of R over its lag grid.
inline double integrate_autocorrelation(const Autocorrelation& r) {
    double s = 0.0;
    for (std::size_t k = 1; k < r.tau.size(); ++k) s += 0.5 * (r.tau[k] - r.tau[k - 1]) * (r.value[k] + r.value[k - 1]);
    return s;
}

// ---------------------------------------------------------------- fits

struct FitResult {
    double estimate = 0.0;
    double standard_error = 0.0;
    double t_begin = 0.0, t_end = 0.0;
    double residual_norm = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

struct FitWindow {
    double begin = 0.0;
    double end = 0.0;
};

namespace detail {

// Weighted straight line y = a + b x; weights may be empty (unit weights).
// Standard errors are scaled by the reduced chi-square.
inline FitResult line_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
    const std::size_t n = x.size();
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        sw += wi;
        sx += wi * x[i];
        sy += wi * y[i];
        sxx += wi * x[i] * x[i];
        sxy += wi * x[i] * y[i];
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 0.0)) throw ConfigError("degenerate fit window");
    FitResult r;
    const double b = (sw * sxy - sx * sy) / det;
    const double a = (sy - b * sx) / sw;
    double chi2 = 0.0, rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - a - b * x[i];
        rss += e * e;
        chi2 += (w.empty() ? 1.0 : w[i]) * e * e;
    }
    const double dof = static_cast<double>(n) - 2.0;
    const double scale = dof > 0 ? chi2 / dof : 0.0;
    r.estimate = b;
    r.intercept = a;
    r.standard_error = std::sqrt(sw / det * scale);
    r.residual_norm = std::sqrt(rss);
    r.points = n;
    return r;
}

}  // namespace detail

// Least squares on ln y over the window; estimate = decay rate (-slope).
// With errors supplied, points are weighted by (y / err)^2.
inline FitResult fit_exponential_decay(std::span<const double> t, std::span<const double> y, FitWindow window,
                                       std::span<const double> err = {}) {
    require(t.size() == y.size(), "time and value series differ in length");
    require(err.empty() || err.size() == y.size(), "error series has the wrong length");
    std::vector<double> x, ly, w;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < window.begin - 1e-12 || t[i] > window.end + 1e-12) continue;
        require(y[i] > 0.0, "exponential fit needs strictly positive values in the window");
        x.push_back(t[i]);
        ly.push_back(std::log(y[i]));
        if (!err.empty()) {
            const double rel = err[i] / y[i];
            w.push_back(rel > 0.0 ? 1.0 / (rel * rel) : 1e300);
        }
    }
    require(x.size() >= 4, "exponential fit needs at least 4 points in the window");
    if (!w.empty() && *std::max_element(w.begin(), w.end()) >= 1e300) w.clear();
    FitResult r = detail::line_fit(x, ly, w);
    r.estimate = -r.estimate;
    r.t_begin = x.front();
    r.t_end = x.back();
    return r;
}

// Linear fit of <dz^2>(t); estimate = D. Only the stationary regime is
// admitted: window.begin >= 3/gamma and a window of at least 2/gamma.
inline FitResult fit_diffusion(std::span<const double> t, std::span<const double> dispersion, FitWindow window,
                               double gamma, std::span<const double> err = {}) {
    require(gamma > 0.0, "diffusion fit needs a positive emission rate");
    require(window.begin >= 3.0 / gamma - 1e-9, "diffusion window must start at t >= 3/gamma");
    require(window.end - window.begin >= 2.0 / gamma - 1e-9, "diffusion window shorter than 2/gamma");
    require(t.size() == dispersion.size(), "time and value series differ in length");
    std::vector<double> x, y, w;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < window.begin - 1e-12 || t[i] > window.end + 1e-12) continue;
        x.push_back(t[i]);
        y.push_back(dispersion[i]);
        if (!err.empty() && err[i] > 0.0) w.push_back(1.0 / (err[i] * err[i]));
    }
    require(x.size() >= 4, "diffusion fit needs at least 4 points in the window");
    if (w.size() != x.size()) w.clear();
    FitResult r = detail::line_fit(x, y, w);
    r.t_begin = x.front();
    r.t_end = x.back();
    return r;
}

// ---------------------------------------------------------------- envelopes

struct Envelope {
    std::vector<double> t, value, err;
};

// Maximum of |v| in each complete half Bloch cycle [k T/2, (k+1) T/2).
inline Envelope cycle_envelope(std::span<const double> t, std::span<const double> v, std::span<const double> err,
                               double period) {
    require(period > 0.0, "envelope extraction needs a positive period");
    require(t.size() == v.size(), "time and value series differ in length");
    Envelope env;
    if (t.empty()) return env;
    const double half = 0.5 * period;
    std::size_t i = 0;
    for (int k = 0;; ++k) {
        const double lo = k * half, hi = (k + 1) * half;
        if (hi > t.back() + 1e-9) break;
        std::optional<std::size_t> best;
        for (; i < t.size() && t[i] < hi - 1e-9; ++i) {
            if (t[i] < lo - 1e-9) continue;
            if (!best || std::abs(v[i]) > std::abs(v[*best])) best = i;
        }
        if (!best) continue;
        env.t.push_back(t[*best]);
        env.value.push_back(std::abs(v[*best]));
        env.err.push_back(err.empty() ? 0.0 : err[*best]);
    }
    return env;
}

// Decay rate of the half-cycle maxima of |v|, restricted to maxima exceeding
// `significance` standard errors.
inline FitResult fit_envelope_decay(std::span<const double> t, std::span<const double> v,
                                    std::span<const double> err, double period, FitWindow window,
                                    double significance = 3.0) {
    const Envelope env = cycle_envelope(t, v, err, period);
    std::vector<double> et, ev, ee;
    for (std::size_t k = 0; k < env.t.size(); ++k) {
        if (env.t[k] < window.begin || env.t[k] > window.end) continue;
        if (env.err[k] > 0.0 && env.value[k] < significance * env.err[k]) continue;
        et.push_back(env.t[k]);
        ev.push_back(env.value[k]);
        ee.push_back(env.err[k]);
    }
    const bool weighted = std::all_of(ee.begin(), ee.end(), [](double e) { return e > 0.0; });
    return fit_exponential_decay(et, ev, {-1e300, 1e300}, weighted ? std::span<const double>(ee)
                                                                   : std::span<const double>());
}

}  // namespace bloch
