// criteria.hpp — acceptance thresholds evaluated on experiment results.
// Shared by `bloch check <preset>` and the acceptance test binary.
#pragma once

#include "bloch/analysis.hpp"
#include "bloch/experiment.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace bloch {

struct CheckLine {
    std::string id;
    bool pass = false;
    std::string detail;
};

inline std::string fmt(double x, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << x;
    return os.str();
}

// Value of a series on the recorded grid closest to time t.
inline std::size_t index_near(const std::vector<double>& t, double target) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (std::abs(t[i] - target) < std::abs(t[best] - target)) best = i;
    return best;
}

// ---------------------------------------------------------------- 1. decay law

struct DecayLawStats {
    FitResult envelope;
    double late_velocity_sq = 0.0;  // <v^2> averaged over the last Bloch cycle
};

inline DecayLawStats decay_law_stats(const ExperimentResult& tb) {
    const auto& s = tb.series;
    const double period = tb_bloch_period(tb.config.tight_binding);
    DecayLawStats out;
    out.envelope = fit_envelope_decay(s.t, s.velocity, s.velocity_err, period, {0.0, s.t.back()});
    double n = 0.0;
    for (std::size_t i = 0; i < s.t.size(); ++i)
        if (s.t[i] >= s.t.back() - period) out.late_velocity_sq += s.velocity_sq[i], n += 1.0;
    out.late_velocity_sq /= n;
    return out;
}

inline CheckLine check_decay_law(const ExperimentResult& tb) {
    const auto st = decay_law_stats(tb);
    const FitResult& f = st.envelope;
    const double v2 = st.late_velocity_sq;
    const double gamma = tb.config.tight_binding.gamma;
    const double v2_st = stationary_velocity_sq(tb.config.tight_binding);
    const bool rate_ok = std::abs(f.estimate - gamma) <= 0.2 * gamma;
    const bool v2_ok = std::abs(v2 - v2_st) <= 0.05 * v2_st;
    return {"decay-law", rate_ok && v2_ok,
            "envelope rate " + fmt(f.estimate) + " +- " + fmt(f.standard_error, 2) + " (target " + fmt(gamma) +
                " +-20%), <v^2>(late) " + fmt(v2) + " (target " + fmt(v2_st) + " +-5%)"};
}

// ---------------------------------------------------------------- 2. diffusion

inline CheckLine check_diffusion(const std::vector<ExperimentResult>& runs) {
    bool ok = true;
    std::string detail;
    std::vector<std::pair<double, double>> fd;
    for (const auto& r : runs) {
        const FitResult f = diffusion_fit(r.config, r.series);
        if (r.config.model != ModelKind::Lindblad) {  // stochastic cross-checks are reported, not judged
            detail += "[SSE M=" + std::to_string(r.series.trajectories) + " F=" + fmt(r.config.tight_binding.force) +
                      ": D=" + fmt(f.estimate) + "] ";
            continue;
        }
        const double target = diffusion_coefficient(r.config.tight_binding);
        const bool within = std::abs(f.estimate - target) <= 0.15 * target;
        ok = ok && within;
        fd.emplace_back(std::abs(r.config.tight_binding.force), f.estimate);
        detail += "F=" + fmt(r.config.tight_binding.force) + ": D=" + fmt(f.estimate) + "+-" +
                  fmt(f.standard_error, 2) + " vs " + fmt(target) + (within ? "" : " [off]") + "; ";
    }
    std::sort(fd.begin(), fd.end());
    bool monotone = true;
    for (std::size_t i = 1; i < fd.size(); ++i) monotone = monotone && fd[i].second < fd[i - 1].second;
    detail += monotone ? "D strictly decreasing in |F|" : "D NOT monotone in |F|";
    return {"recoil-diffusion", ok && monotone, detail};
}

// ---------------------------------------------------------------- 3. oracle

inline CheckLine check_oracle(const ExperimentResult& tb, const ExperimentResult& lb, double nsigma = 3.0) {
    const auto& a = tb.series;
    const auto& b = lb.series;
    std::size_t checked = 0, failed = 0;
    double worst = 0.0;
    for (std::size_t i = 1; i < a.t.size(); ++i) {
        const std::size_t j = index_near(b.t, a.t[i]);
        if (std::abs(b.t[j] - a.t[i]) > 1e-9) continue;
        const double pulls[3] = {
            (a.velocity[i] - b.velocity[j]) / a.velocity_err[i],
            (a.position[i] - b.position[j]) / a.position_err[i],
            (a.velocity_sq[i] - b.velocity_sq[j]) / a.velocity_sq_err[i],
        };
        for (double pull : pulls) {
            worst = std::max(worst, std::abs(pull));
            if (!(std::abs(pull) <= nsigma)) ++failed;
        }
        ++checked;
    }
    const bool ok = checked >= 10 && failed == 0;
    return {"oracle-equivalence", ok,
            std::to_string(checked) + " checkpoints x {v, z, v^2}, worst deviation " + fmt(worst, 3) +
                " standard errors, " + std::to_string(failed) + " beyond " + fmt(nsigma, 2)};
}

// ---------------------------------------------------------------- 4. decoherence map

struct DecoherenceStats {
    double t = 0.0;
    double far_max = 0.0, far_sum = 0.0;  // max and sum of profile(k >= 2)
    double diagonal = 0.0;                // profile(0)
    double estimate_error = 0.0;          // relative error of the first off-diagonal on central sites
};

inline DecoherenceStats decoherence_stats(const ExperimentResult& lb) {
    require(!lb.density_snapshots.empty(), "no density snapshot recorded");
    const auto& rho = lb.density_snapshots.back();
    const TBParams& p = lb.config.tight_binding;
    const auto prof = offdiagonal_mass_profile(rho);
    double far_max = 0.0, far_sum = 0.0;
    for (std::size_t k = 2; k < prof.size(); ++k) far_max = std::max(far_max, prof[k]), far_sum += prof[k];
    // Central sites: within two standard deviations of the population centre.
    const RVector pop = rho.rho.diagonal().real();
    const auto n = pop.size();
    double mean = 0.0, var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += i * pop[i];
    for (Eigen::Index i = 0; i < n; ++i) var += (i - mean) * (i - mean) * pop[i];
    const double sd = std::sqrt(var);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        if (std::abs(i + 0.5 - mean) > 2.0 * sd) continue;
        const cplx est = stationary_offdiagonal_estimate(pop[i], pop[i + 1], p);
        const cplx got = rho.rho(i + 1, i);
        num += std::norm(got - est);
        den += std::norm(est);
    }
    return {rho.t, far_max, far_sum, prof[0], std::sqrt(num / den)};
}

inline CheckLine check_decoherence_map(const ExperimentResult& lb) {
    const auto s = decoherence_stats(lb);
    const bool ok = s.far_max < 0.05 * s.diagonal && s.estimate_error <= 0.15;
    return {"decoherence-map", ok,
            "t=" + fmt(s.t) + ": max_k>=2 profile " + fmt(s.far_max, 3) + " (sum " + fmt(s.far_sum, 3) +
                ") vs profile(0) " + fmt(s.diagonal, 6) + "; first off-diagonal vs stationary estimate rel. error " +
                fmt(s.estimate_error, 3) + " on sites within 2 sd"};
}

// ---------------------------------------------------------------- 5. bands

inline CheckLine check_band_structure(const BandSpectrum& u1, const BandSpectrum& u4) {
    const double r1 = cosine_band_fit(u1).residual;
    const double r4 = cosine_band_fit(u4).residual;
    const BandSpectrum free = band_spectrum(0.0, 2, 128, 31);
    double dev = 0.0;
    for (Eigen::Index k = 0; k < free.kappa.size(); ++k)
        dev = std::max(dev, std::abs(free.energy(0, k) - free.kappa[k] * free.kappa[k]));
    const bool ok = r4 < 0.02 && r1 > 5.0 * r4 && dev < 1e-8;
    return {"band-structure", ok,
            "cosine-fit residual U=4 " + fmt(r4, 3) + ", U=1 " + fmt(r1, 3) + " (ratio " + fmt(r1 / r4, 3) +
                "), U=0 max |e0 - k^2| " + fmt(dev, 2)};
}

// ---------------------------------------------------------------- 6. coherent continuum

struct OscillationFeatures {
    std::vector<double> peak_times;
    double asymmetry = 0.0;         // harmonic content beyond the fundamental
    double low_fraction = 0.0;      // share of absorbed probability taken out at z_min
    std::vector<int> bursts;        // emission bursts per Bloch cycle
};

// Local maxima of y above `level` * max(y), refined by a parabola.
inline std::vector<double> peak_times(const std::vector<double>& t, const std::vector<double>& y, double level) {
    const double top = *std::max_element(y.begin(), y.end());
    std::vector<double> out;
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > level * top)) continue;
        const double a = y[i - 1], b = y[i], c = y[i + 1];
        const double den = a - 2.0 * b + c;
        const double shift = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
        out.push_back(t[i] + shift * (t[i + 1] - t[i]));
    }
    return out;
}

inline OscillationFeatures oscillation_features(const ExperimentResult& r) {
    const auto& s = r.series;
    const double T = r.config.continuum.bloch_period();
    OscillationFeatures f;
    // The force drives p at -F, so the smooth extremum of each cycle is the
    // end of the ramp in the -sign(F) direction, just before Bragg reflection.
    std::vector<double> ramp(s.velocity.size());
    const double sign = r.config.continuum.force > 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = sign * s.velocity[i];
    f.peak_times = peak_times(s.t, ramp, 0.5);
    // Harmonic fit over whole cycles after the first.
    const double w = 2.0 * pi / T;
    const int harmonics = 5;
    std::vector<std::size_t> idx;
    const int cycles = static_cast<int>(std::floor(s.t.back() / T + 1e-9));
    for (std::size_t i = 0; i < s.t.size(); ++i)
        if (s.t[i] >= T - 1e-9 && s.t[i] < cycles * T - 1e-9) idx.push_back(i);
    RMatrix a(idx.size(), 2 * harmonics + 1);
    RVector y(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double t = s.t[idx[k]];
        a(k, 0) = 1.0;
        for (int h = 1; h <= harmonics; ++h) {
            a(k, 2 * h - 1) = std::sin(h * w * t);
            a(k, 2 * h) = std::cos(h * w * t);
        }
        y[k] = s.velocity[idx[k]];
    }
    const RVector c = a.colPivHouseholderQr().solve(y);
    const double fundamental = std::hypot(c[1], c[2]);
    double higher = 0.0;
    for (int h = 2; h <= harmonics; ++h) higher += c[2 * h - 1] * c[2 * h - 1] + c[2 * h] * c[2 * h];
    f.asymmetry = std::sqrt(higher) / fundamental;
    const double lo = s.absorbed_low.back(), hi = s.absorbed_high.back();
    f.low_fraction = lo + hi > 0.0 ? lo / (lo + hi) : 0.0;
    // Emission flux into the z_min absorber; bursts = flux maxima above half
    // of the cycle's largest, counted per cycle from the second on.
    std::vector<double> tf, flux;
    for (std::size_t i = 1; i < s.t.size(); ++i) {
        tf.push_back(0.5 * (s.t[i] + s.t[i - 1]));
        flux.push_back((s.absorbed_low[i] - s.absorbed_low[i - 1]) / (s.t[i] - s.t[i - 1]));
    }
    for (int k = 1; k < cycles; ++k) {
        std::vector<double> ct, cf;
        for (std::size_t i = 0; i < tf.size(); ++i)
            if (tf[i] >= k * T && tf[i] < (k + 1) * T) ct.push_back(tf[i]), cf.push_back(flux[i]);
        f.bursts.push_back(static_cast<int>(peak_times(ct, cf, 0.5).size()));
    }
    return f;
}

inline CheckLine check_coherent_continuum(const ExperimentResult& r) {
    const double T = r.config.continuum.bloch_period();
    const auto f = oscillation_features(r);
    bool timing = f.peak_times.size() >= 3;
    double worst = 0.0;
    for (std::size_t i = 1; i < f.peak_times.size(); ++i) {
        const double dev = std::abs(f.peak_times[i] - f.peak_times[i - 1] - T) / T;
        worst = std::max(worst, dev);
    }
    timing = timing && worst <= 0.02;
    const bool asym = f.asymmetry > 0.05;
    const bool directional = f.low_fraction > 0.9;
    const bool once = !f.bursts.empty() && std::all_of(f.bursts.begin(), f.bursts.end(), [](int b) { return b == 1; });
    std::string bursts;
    for (int b : f.bursts) bursts += std::to_string(b);
    return {"coherent-continuum", timing && asym && directional && once,
            std::to_string(f.peak_times.size()) + " velocity peaks, worst peak spacing deviation " +
                fmt(100 * worst, 3) + "% of T_B=" + fmt(T) + "; harmonic asymmetry " + fmt(f.asymmetry, 3) +
                "; z_min share of emission " + fmt(f.low_fraction, 4) + "; bursts per cycle [" + bursts + "]"};
}

// ---------------------------------------------------------------- 7. depletion table

inline double table1_reference(double depth, double gamma) {
    static const std::map<std::pair<int, int>, double> ref{
        {{1, 0}, 2.5e-4},  {{1, 1}, 6.0e-4}, {{1, 10}, 3.0e-3}, {{1, 50}, 1.0e-2},
        {{4, 0}, 1.0e-6},  {{4, 1}, 1.5e-4}, {{4, 10}, 1.5e-3}, {{4, 50}, 0.9e-2}};
    return ref.at({static_cast<int>(std::lround(depth)), static_cast<int>(std::lround(gamma * 1000))});
}

struct DepletionCell {
    double depth, gamma, nu, err;
};

inline std::vector<DepletionCell> depletion_cells(const std::vector<ExperimentResult>& runs) {
    std::vector<DepletionCell> cells;
    for (const auto& r : runs) {
        const FitResult f = depletion_fit(r.config, r.series);
        cells.push_back({r.config.continuum.depth, r.config.continuum.gamma, f.estimate, f.standard_error});
    }
    return cells;
}

inline CheckLine check_table1(const std::vector<ExperimentResult>& runs, bool quick) {
    auto cells = depletion_cells(runs);
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.gamma < b.gamma;
    });
    bool ok = true;
    std::string detail;
    for (double u : {1.0, 4.0}) {
        double prev = -1.0;
        bool increasing = true;
        for (const auto& c : cells) {
            if (c.depth != u) continue;
            increasing = increasing && c.nu > prev;
            prev = c.nu;
            bool cell_ok = true;
            if (!quick) {
                const double ref = table1_reference(c.depth, c.gamma);
                if (c.gamma == 0.0 && u == 4.0) cell_ok = c.nu < 1e-5;
                else cell_ok = c.nu >= 0.5 * ref && c.nu <= 2.0 * ref;
            }
            ok = ok && cell_ok;
            detail += "U=" + fmt(u) + " g=" + fmt(c.gamma) + ": " + fmt(c.nu, 3) + (cell_ok ? "" : "[off]") + "; ";
        }
        ok = ok && increasing;
        detail += increasing ? "" : "U=" + fmt(u) + " NOT increasing in gamma; ";
    }
    return {quick ? "depletion-table-quick" : "depletion-table", ok, detail};
}

// ---------------------------------------------------------------- 8. slowdown

// Single-band prediction for a continuum run: a recoil kick leaves the band
// model in a uniform quasimomentum mixture with zero mean velocity, so the
// damped velocity is exactly exp(-gamma t) times the coherent one.
inline std::vector<double> single_band_prediction(const ExperimentResult& coherent_tb, double gamma) {
    std::vector<double> v = coherent_tb.series.velocity;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::exp(-gamma * coherent_tb.series.t[i]);
    return v;
}

struct EnvelopeComparison {
    std::vector<double> t, continuum, continuum_err, tight_binding;
    double deviation = 0.0;  // rms of (continuum - tb) in velocity units, from cycle 3 on
    int below = 0;           // maxima below the prediction by more than the tolerance
};

inline EnvelopeComparison compare_envelopes(const ExperimentResult& cont, const ExperimentResult& tb,
                                            double nsigma = 2.0) {
    const double T = cont.config.continuum.bloch_period();
    const double gamma = cont.config.continuum.gamma;
    const auto pred = single_band_prediction(tb, gamma);
    const Envelope ec = cycle_envelope(cont.series.t, cont.series.velocity, cont.series.velocity_err, T);
    const Envelope et = cycle_envelope(tb.series.t, pred, {}, T);
    EnvelopeComparison out;
    const std::size_t n = std::min(ec.t.size(), et.t.size());
    double ss = 0.0;
    int used = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (ec.t[k] < 2.0 * T) continue;
        out.t.push_back(ec.t[k]);
        out.continuum.push_back(ec.value[k]);
        out.continuum_err.push_back(ec.err[k]);
        out.tight_binding.push_back(et.value[k]);
        const double d = ec.value[k] - et.value[k];
        ss += d * d;
        ++used;
        if (ec.value[k] + nsigma * ec.err[k] < et.value[k]) ++out.below;
    }
    out.deviation = used ? std::sqrt(ss / used) : 0.0;
    return out;
}

inline CheckLine check_slowdown(const ExperimentResult& cont1, const ExperimentResult& tb1,
                                const ExperimentResult* cont4 = nullptr, const ExperimentResult* tb4 = nullptr) {
    const auto c1 = compare_envelopes(cont1, tb1);
    bool ok = !c1.t.empty() && c1.below == 0;
    std::string detail = "U=1: " + std::to_string(c1.t.size() - c1.below) + "/" + std::to_string(c1.t.size()) +
                         " half-cycle maxima from cycle 3 at or above the single-band prediction (2 sd), rms deviation " +
                         fmt(c1.deviation, 3);
    if (cont4 && tb4) {
        const auto c4 = compare_envelopes(*cont4, *tb4);
        const bool closer = c4.deviation < c1.deviation;
        ok = ok && closer;
        detail += "; U=4 rms deviation " + fmt(c4.deviation, 3) + (closer ? " (smaller)" : " (NOT smaller)");
    }
    return {"oscillation-slowdown", ok, detail};
}

}  // namespace bloch
