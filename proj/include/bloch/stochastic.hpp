// stochastic.hpp — linear stochastic Schrodinger equation integrator and
// deterministic, thread-count independent trajectory ensembles.
//
// One step advances psi by
//     dpsi = (-(i/hbar) H dt - (gamma/2) L_u^+ L_u dt + sqrt(gamma) L_u dxi) psi
// with a fresh u ~ U[-1, 1] and a real Wiener increment dxi ~ N(0, dt) drawn
// every step. The norm is not restored: the ensemble average of the
// unnormalized quadratic forms <psi|A|psi> reproduces Tr[A rho(t)].
//
// The coherent part is delegated to the model (exact phases / RK4 / split
// operator); the noise part is diagonal in position for both lattice and
// continuum recoil operators and is applied pointwise.
#pragma once

#include "bloch/core.hpp"
#include "bloch/observables.hpp"
#include "bloch/rng.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace bloch {

enum class Scheme { EulerMaruyama, Heun };

inline const char* to_string(Scheme s) { return s == Scheme::Heun ? "heun" : "euler-maruyama"; }

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "euler-maruyama" || s == "euler") return Scheme::EulerMaruyama;
    if (s == "heun") return Scheme::Heun;
    throw ConfigError("unknown integration scheme '" + s + "'");
}

// Largest dt * (fastest model rate) admitted by the step guard.
inline constexpr double kStepGuard = 0.05;

struct SdeConfig {
    double dt = 0.025;
    double duration = 100.0;
    std::size_t trajectories = 1;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::EulerMaruyama;
    std::size_t record_every = 0;  // 0: ceil(T_B / (100 dt))
    // Ratio estimators: observables as sum <psi|A|psi> / sum P, and P itself
    // as sum P / sum (norm + absorbed). Off: plain means of <psi|A|psi>.
    bool normalize_by_survival = false;
    unsigned threads = 0;  // 0: BLOCH_THREADS or hardware concurrency

    void validate(double max_rate) const {
        require(finite(dt) && dt > 0.0, "time step must be positive");
        require(finite(duration) && duration >= dt, "duration must cover at least one step");
        require(trajectories >= 1, "ensemble needs at least one trajectory");
        require(dt * max_rate <= kStepGuard * (1.0 + 1e-12),
                "time step too large: dt * max(omega_B, gamma, bandwidth/hbar) = " + std::to_string(dt * max_rate) +
                    " exceeds " + std::to_string(kStepGuard));
    }

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

    std::size_t recording_stride(double bloch_period) const {
        if (record_every > 0) return record_every;
        if (bloch_period <= 0.0) return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(1.0 / dt)));
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(bloch_period / (100.0 * dt))));
    }
};

template <class M>
concept SdeModel = requires(const M& m, typename M::State& s, typename M::Workspace& w, double u, CVector& buf) {
    { m.dt() } -> std::convertible_to<double>;
    { m.gamma() } -> std::convertible_to<double>;
    { m.size() } -> std::convertible_to<Eigen::Index>;
    { m.max_rate() } -> std::convertible_to<double>;
    { m.bloch_period() } -> std::convertible_to<double>;
    { m.make_workspace() } -> std::same_as<typename M::Workspace>;
    m.propagate(s, w);
    m.fill_recoil(u, buf);
    { m.recoil_weight() } -> std::convertible_to<const RVector&>;
    { m.observe(s, w) } -> std::same_as<Sample>;
    m.check(s);
};

// psi <- psi * (1 - (gamma/2) |l|^2 dt + sqrt(gamma) l dxi)   (Euler-Maruyama)
// psi <- psi * (1 + k + k^2/2), k = (-(gamma/2)|l|^2 - gamma l^2 / 2) dt + sqrt(gamma) l dxi  (Heun)
inline void apply_recoil_noise(CVector& psi, const CVector& recoil, const RVector& weight, double gamma, double dt,
                               double dxi, Scheme scheme) {
    if (gamma == 0.0) return;
    const double sg = std::sqrt(gamma);
    const double drift = -0.5 * gamma * dt;
    if (scheme == Scheme::EulerMaruyama) {
        psi.array() *= (1.0 + drift * weight.array()).cast<cplx>() + (sg * dxi) * recoil.array();
        return;
    }
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const cplx b = sg * recoil[i];
        const cplx k = (drift * weight[i] - 0.5 * dt * b * b) + b * dxi;
        psi[i] *= 1.0 + k + 0.5 * k * k;
    }
}

// One step with explicit draws (u, dxi).
template <SdeModel M>
void sde_step(const M& model, typename M::State& state, typename M::Workspace& ws, double u, double dxi,
              Scheme scheme = Scheme::EulerMaruyama) {
    model.propagate(state, ws);
    if (model.gamma() == 0.0) return;
    model.fill_recoil(u, ws.recoil);
    apply_recoil_noise(state.psi, ws.recoil, model.recoil_weight(), model.gamma(), model.dt(), dxi, scheme);
}

template <SdeModel M>
void sde_step(const M& model, typename M::State& state, typename M::Workspace& ws, TrajectoryRng& rng,
              Scheme scheme = Scheme::EulerMaruyama) {
    const double u = rng.recoil_projection();
    const double dxi = rng.wiener_increment(model.dt());
    sde_step(model, state, ws, u, dxi, scheme);
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("BLOCH_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Ensemble statistics of one observable quantity per output time.
struct ObservableSeries {
    std::vector<double> t;
    std::vector<double> survival, survival_err;
    std::vector<double> velocity, velocity_err;
    std::vector<double> position, position_err;
    std::vector<double> dispersion, dispersion_err;
    std::vector<double> velocity_sq, velocity_sq_err;
    std::vector<double> norm, norm_err;
    std::vector<double> absorbed_low, absorbed_high;
    std::size_t trajectories = 0;
    bool normalized = false;

    std::size_t size() const noexcept { return t.size(); }

    void resize(std::size_t n) {
        for (auto* v : {&t, &survival, &survival_err, &velocity, &velocity_err, &position, &position_err,
                        &dispersion, &dispersion_err, &velocity_sq, &velocity_sq_err, &norm, &norm_err,
                        &absorbed_low, &absorbed_high})
            v->assign(n, 0.0);
    }
};

// Running first and second moments of Sample, accumulated in a fixed order.
class EnsembleMoments {
public:
    EnsembleMoments() = default;
    explicit EnsembleMoments(std::vector<double> times)
        : times_(std::move(times)), sum_(times_.size(), Sample{}), cross_(times_.size()) {
        for (auto& c : cross_) c.fill(0.0);
    }

    void add(const std::vector<Sample>& trajectory) {
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const Sample& x = trajectory[j];
            for (std::size_t a = 0; a < kObsCount; ++a) {
                sum_[j][a] += x[a];
                for (std::size_t b = a; b < kObsCount; ++b) cross_[j][a * kObsCount + b] += x[a] * x[b];
            }
        }
        ++count_;
    }

    std::size_t count() const noexcept { return count_; }
    const std::vector<double>& times() const noexcept { return times_; }

    double mean(std::size_t j, std::size_t a) const { return sum_[j][a] / static_cast<double>(count_); }

    // Sample covariance of observables a and b at output j.
    double covariance(std::size_t j, std::size_t a, std::size_t b) const {
        if (count_ < 2) return 0.0;
        if (a > b) std::swap(a, b);
        const double n = static_cast<double>(count_);
        const double c = cross_[j][a * kObsCount + b] / n - mean(j, a) * mean(j, b);
        return c * n / (n - 1.0);
    }

    // Delta-method standard error of f(means) for gradient g (sparse list).
    double stderr_of(std::size_t j, std::initializer_list<std::pair<std::size_t, double>> grad) const {
        if (count_ < 2) return 0.0;
        double var = 0.0;
        for (const auto& [a, ga] : grad)
            for (const auto& [b, gb] : grad) var += ga * gb * covariance(j, a, b);
        return std::sqrt(std::max(var, 0.0) / static_cast<double>(count_));
    }

    ObservableSeries summarize(bool normalize_by_survival) const {
        ObservableSeries s;
        s.resize(times_.size());
        s.trajectories = count_;
        s.normalized = normalize_by_survival;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            s.t[j] = times_[j];
            const double P = mean(j, kSurvival), v = mean(j, kVelocity), z = mean(j, kPosition),
                         z2 = mean(j, kPositionSq), v2 = mean(j, kVelocitySq);
            s.norm[j] = mean(j, kNorm);
            s.norm_err[j] = stderr_of(j, {{kNorm, 1.0}});
            s.survival[j] = P;
            s.survival_err[j] = stderr_of(j, {{kSurvival, 1.0}});
            s.absorbed_low[j] = mean(j, kAbsorbedLow);
            s.absorbed_high[j] = mean(j, kAbsorbedHigh);
            if (!normalize_by_survival) {
                s.velocity[j] = v;
                s.velocity_err[j] = stderr_of(j, {{kVelocity, 1.0}});
                s.position[j] = z;
                s.position_err[j] = stderr_of(j, {{kPosition, 1.0}});
                s.dispersion[j] = z2 - z * z;
                s.dispersion_err[j] = stderr_of(j, {{kPositionSq, 1.0}, {kPosition, -2.0 * z}});
                s.velocity_sq[j] = v2;
                s.velocity_sq_err[j] = stderr_of(j, {{kVelocitySq, 1.0}});
            } else {
                // Survival against the total weight N + absorbed, whose mean is
                // exactly 1 (norm martingale with the mask losses added back).
                const double wsum = s.norm[j] + s.absorbed_low[j] + s.absorbed_high[j];
                s.survival[j] = P / wsum;
                s.survival_err[j] = stderr_of(j, {{kSurvival, 1.0 / wsum},
                                                  {kNorm, -P / (wsum * wsum)},
                                                  {kAbsorbedLow, -P / (wsum * wsum)},
                                                  {kAbsorbedHigh, -P / (wsum * wsum)}});
                const double zn = z / P;
                s.velocity[j] = v / P;
                s.velocity_err[j] = stderr_of(j, {{kVelocity, 1.0 / P}, {kSurvival, -v / (P * P)}});
                s.position[j] = zn;
                s.position_err[j] = stderr_of(j, {{kPosition, 1.0 / P}, {kSurvival, -z / (P * P)}});
                s.dispersion[j] = z2 / P - zn * zn;
                s.dispersion_err[j] =
                    stderr_of(j, {{kPositionSq, 1.0 / P},
                                  {kPosition, -2.0 * z / (P * P)},
                                  {kSurvival, -z2 / (P * P) + 2.0 * z * z / (P * P * P)}});
                s.velocity_sq[j] = v2 / P;
                s.velocity_sq_err[j] = stderr_of(j, {{kVelocitySq, 1.0 / P}, {kSurvival, -v2 / (P * P)}});
            }
        }
        return s;
    }

private:
    std::vector<double> times_;
    std::vector<Sample> sum_;
    std::vector<std::array<double, kObsCount * kObsCount>> cross_;
    std::size_t count_ = 0;
};

struct TrajectoryFailure {
    std::size_t index;
    std::uint64_t seed;
    std::string message;
};

class EnsembleAbort : public NumericalAbort {
public:
    EnsembleAbort(const std::string& what, std::vector<TrajectoryFailure> failures)
        : NumericalAbort(what), failures_(std::move(failures)) {}
    const std::vector<TrajectoryFailure>& failures() const noexcept { return failures_; }

private:
    std::vector<TrajectoryFailure> failures_;
};

// Integrates one trajectory and returns its samples at every recorded step.
template <SdeModel M>
std::vector<Sample> run_trajectory(const M& model, const typename M::State& initial, const SdeConfig& cfg,
                                   std::uint64_t seed) {
    const std::size_t steps = cfg.steps();
    const std::size_t stride = cfg.recording_stride(model.bloch_period());
    std::vector<Sample> out;
    out.reserve(steps / stride + 1);
    typename M::State state = initial;
    auto ws = model.make_workspace();
    TrajectoryRng rng(seed);
    for (std::size_t n = 0;; ++n) {
        if (n % stride == 0) {
            model.check(state);
            out.push_back(model.observe(state, ws));
        }
        if (n == steps) break;
        sde_step(model, state, ws, rng, cfg.scheme);
    }
    return out;
}

template <SdeModel M>
std::vector<double> recording_times(const M& model, const SdeConfig& cfg) {
    const std::size_t stride = cfg.recording_stride(model.bloch_period());
    std::vector<double> t;
    for (std::size_t n = 0; n <= cfg.steps(); n += stride) t.push_back(static_cast<double>(n) * cfg.dt);
    return t;
}

// Runs cfg.trajectories independent trajectories and reduces them in index
// order, so the result is bit-identical for any thread count.
template <SdeModel M>
EnsembleMoments run_ensemble_moments(const M& model, const typename M::State& initial, const SdeConfig& cfg) {
    require(std::abs(cfg.dt - model.dt()) <= 1e-15 * cfg.dt, "model and configuration disagree on dt");
    cfg.validate(model.max_rate());
    model.check(initial);

    const unsigned threads = resolve_threads(cfg.threads);
    const std::size_t chunk = std::max<std::size_t>(16, 4 * static_cast<std::size_t>(threads));
    EnsembleMoments moments(recording_times(model, cfg));
    std::vector<std::vector<Sample>> results(chunk);
    std::vector<std::optional<TrajectoryFailure>> failures(chunk);

    for (std::size_t begin = 0; begin < cfg.trajectories; begin += chunk) {
        const std::size_t end = std::min(cfg.trajectories, begin + chunk);
        std::atomic<std::size_t> next{begin};
        auto worker = [&] {
            for (std::size_t k = next++; k < end; k = next++) {
                const std::uint64_t seed = trajectory_seed(cfg.seed, k);
                try {
                    results[k - begin] = run_trajectory(model, initial, cfg, seed);
                    failures[k - begin].reset();
                } catch (const std::exception& e) {
                    failures[k - begin] = TrajectoryFailure{k, seed, e.what()};
                }
            }
        };
        const unsigned nworkers = static_cast<unsigned>(std::min<std::size_t>(threads, end - begin));
        if (nworkers <= 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < nworkers; ++w) pool.emplace_back(worker);
        }
        std::vector<TrajectoryFailure> failed;
        for (std::size_t k = begin; k < end; ++k)
            if (failures[k - begin]) failed.push_back(*failures[k - begin]);
        if (!failed.empty()) {
            std::string msg = "trajectory " + std::to_string(failed.front().index) + " (seed " +
                              std::to_string(failed.front().seed) + ") aborted: " + failed.front().message;
            if (failed.size() > 1) msg += " (+" + std::to_string(failed.size() - 1) + " more)";
            throw EnsembleAbort(msg, std::move(failed));
        }
        for (std::size_t k = begin; k < end; ++k) moments.add(results[k - begin]);
    }
    return moments;
}

template <SdeModel M>
ObservableSeries run_ensemble(const M& model, const typename M::State& initial, const SdeConfig& cfg) {
    return run_ensemble_moments(model, initial, cfg).summarize(cfg.normalize_by_survival);
}

}  // namespace bloch
