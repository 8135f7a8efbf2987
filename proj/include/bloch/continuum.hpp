// continuum.hpp — continuum model in recoil units,
//     H = p^2 - U cos^2(z) + F z,   p = -i d/dz,   hbar = 1,
// lattice period pi, Bloch period 2/F. Provides the plane-wave band solver,
// the exact Bloch decomposition of grid states, split-operator propagation
// with an absorbing mask, and windowed observables.
#pragma once

#include "bloch/core.hpp"
#include "bloch/observables.hpp"
#include "bloch/tight_binding.hpp"

#include <fftw3.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace bloch {

struct ContinuumParams {
    double depth = 1.0;  // U
    double force = 0.0;  // F
    double gamma = 0.0;
    double z_min = -64.0 * pi;
    double z_max = 64.0 * pi;
    int points = 4096;
    double mask_width = 8.0 * pi;
    double window = 20.0 * pi;  // measurement window [-window, window]

    double extent() const noexcept { return z_max - z_min; }
    double spacing() const noexcept { return extent() / points; }
    int cells() const noexcept { return static_cast<int>(std::lround(extent() / pi)); }
    double bloch_frequency() const noexcept { return pi * force; }
    double bloch_period() const noexcept { return force != 0.0 ? 2.0 / std::abs(force) : 0.0; }
    // Largest momentum the dynamics can reach on the grid: zone edge plus the
    // full potential drop across the grid.
    double max_momentum() const { return 1.0 + std::sqrt(std::abs(depth) + std::abs(force) * extent()); }

    void validate() const {
        require(finite(depth) && finite(force) && finite(gamma) && finite(z_min) && finite(z_max) &&
                    finite(mask_width) && finite(window),
                "continuum parameters must be finite");
        require(gamma >= 0.0, "emission rate must be non-negative");
        require(z_max > z_min, "grid extent must be positive");
        require(points >= 64 && (points & (points - 1)) == 0, "grid size must be a power of two >= 64");
        require(spacing() <= pi / 16.0 * (1.0 + 1e-12), "grid spacing must resolve the lattice (dz <= pi/16)");
        require(std::abs(extent() / pi - cells()) < 1e-9 * cells(), "grid extent must be a whole number of lattice periods");
        require(cells() % 2 == 0 && points % cells() == 0, "grid must hold an even number of cells dividing the point count");
        require(pi / spacing() >= 4.0 * max_momentum(), "momentum grid too coarse for the expected momenta");
        require(mask_width >= 0.0 && 2.0 * mask_width < extent(), "absorbing mask wider than the grid");
        require(window > 0.0 && -window >= z_min + mask_width - 1e-9 && window <= z_max - mask_width + 1e-9,
                "measurement window must lie inside the grid and clear of the absorbing mask");
    }
};

struct GridState {
    CVector psi;
    double t = 0.0;
    double absorbed_low = 0.0;   // cumulative probability taken out at z_min
    double absorbed_high = 0.0;  // ... and at z_max
};

// fftw_malloc'd buffer.
class FftBuffer {
public:
    explicit FftBuffer(std::size_t n) : n_(n), data_(static_cast<cplx*>(fftw_malloc(sizeof(cplx) * n))) {
        if (!data_) throw std::bad_alloc();
    }
    FftBuffer(const FftBuffer& o) : FftBuffer(o.n_) { std::copy(o.data_, o.data_ + n_, data_); }
    FftBuffer& operator=(const FftBuffer&) = delete;
    FftBuffer(FftBuffer&& o) noexcept : n_(o.n_), data_(o.data_) { o.data_ = nullptr; o.n_ = 0; }
    ~FftBuffer() { if (data_) fftw_free(data_); }

    cplx* data() noexcept { return data_; }
    const cplx* data() const noexcept { return data_; }
    cplx& operator[](std::size_t i) noexcept { return data_[i]; }
    std::size_t size() const noexcept { return n_; }
    Eigen::Map<CVector, Eigen::Aligned16> vec() noexcept { return {data_, static_cast<Eigen::Index>(n_)}; }

private:
    std::size_t n_;
    cplx* data_;
};

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// In-place forward/backward plans for FftBuffer storage. Execution is
// thread-safe; planning and destruction are serialized.
class FftPlan {
public:
    explicit FftPlan(int n) : n_(n) {
        FftBuffer scratch(static_cast<std::size_t>(n));
        std::lock_guard lock(fftw_planner_mutex());
        auto* d = reinterpret_cast<fftw_complex*>(scratch.data());
        fwd_ = fftw_plan_dft_1d(n, d, d, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(n, d, d, FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!fwd_ || !bwd_) throw std::runtime_error("FFTW planning failed");
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
    ~FftPlan() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

    int size() const noexcept { return n_; }
    void forward(FftBuffer& b) const {
        auto* d = reinterpret_cast<fftw_complex*>(b.data());
        fftw_execute_dft(fwd_, d, d);
    }
    // Unnormalized inverse.
    void backward(FftBuffer& b) const {
        auto* d = reinterpret_cast<fftw_complex*>(b.data());
        fftw_execute_dft(bwd_, d, d);
    }

private:
    int n_;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

// Sample positions, FFT-ordered momenta and measurement-window indices.
struct ContinuumGrid {
    RVector z;
    RVector p;
    double dz = 0.0;
    Eigen::Index window_first = 0, window_last = 0;  // inclusive

    explicit ContinuumGrid(const ContinuumParams& c) {
        c.validate();
        const int n = c.points;
        dz = c.spacing();
        z.resize(n);
        p.resize(n);
        const double dp = 2.0 * pi / c.extent();
        for (int i = 0; i < n; ++i) {
            z[i] = c.z_min + i * dz;
            p[i] = (i < n / 2 ? i : i - n) * dp;
        }
        window_first = static_cast<Eigen::Index>(std::ceil((-c.window - c.z_min) / dz - 1e-9));
        window_last = static_cast<Eigen::Index>(std::floor((c.window - c.z_min) / dz + 1e-9));
    }

    Eigen::Index size() const noexcept { return z.size(); }
};

// ---------------------------------------------------------------- bands

struct BandSpectrum {
    RVector kappa;   // uniform on [-1, 1)
    RMatrix energy;  // energy(n, k) = epsilon_n(kappa_k)

    int bands() const noexcept { return static_cast<int>(energy.rows()); }
    RVector band(int n) const { return energy.row(n).transpose(); }
    // min_kappa (epsilon_{n+1} - epsilon_n)
    double gap(int n) const { return (energy.row(n + 1) - energy.row(n)).minCoeff(); }
    double width(int n) const { return energy.row(n).maxCoeff() - energy.row(n).minCoeff(); }
};

// Plane waves p = kappa + 2j, j = -J..J: diagonal p^2 - U/2, neighbours -U/4.
inline RMatrix planewave_hamiltonian(double depth, double kappa, int planewaves) {
    const int half = planewaves / 2;
    RMatrix h = RMatrix::Zero(planewaves, planewaves);
    for (int a = 0; a < planewaves; ++a) {
        const double pa = kappa + 2.0 * (a - half);
        h(a, a) = pa * pa - 0.5 * depth;
        if (a + 1 < planewaves) h(a, a + 1) = h(a + 1, a) = -0.25 * depth;
    }
    return h;
}

inline BandSpectrum band_spectrum(double depth, int n_bands, int n_kappa, int planewaves) {
    require(finite(depth), "potential depth must be finite");
    require(n_bands >= 1 && n_kappa >= 2, "need at least one band and two quasimomenta");
    require(planewaves % 2 == 1 && planewaves >= 2 * n_bands + 5, "plane-wave count must be odd and >= 2 n_bands + 5");
    BandSpectrum out;
    out.kappa.resize(n_kappa);
    out.energy.resize(n_bands, n_kappa);
    for (int k = 0; k < n_kappa; ++k) {
        const double kappa = -1.0 + 2.0 * k / n_kappa;
        out.kappa[k] = kappa;
        Eigen::SelfAdjointEigenSolver<RMatrix> es(planewave_hamiltonian(depth, kappa, planewaves),
                                                  Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw NumericalAbort("band diagonalization did not converge at kappa index " + std::to_string(k));
        out.energy.col(k) = es.eigenvalues().head(n_bands);
    }
    return out;
}

inline HoppingExpansion tb_parameters_from_band(const BandSpectrum& s, double rel_cutoff = 1e-6) {
    require(s.bands() >= 1, "spectrum has no ground band");
    const RVector e0 = s.band(0);
    return hoppings_from_dispersion(std::span<const double>(s.kappa.data(), s.kappa.size()),
                                   std::span<const double>(e0.data(), e0.size()), pi, rel_cutoff);
}

struct CosineFit {
    double offset;    // E_0
    double hopping;   // Delta in E_0 - Delta cos(pi kappa)
    double residual;  // ||epsilon_0 - fit|| / ||epsilon_0||
};

// Least-squares fit of the ground band to E_0 - Delta cos(pi kappa).
inline CosineFit cosine_band_fit(const BandSpectrum& s) {
    const RVector e = s.band(0);
    const auto n = e.size();
    RMatrix a(n, 2);
    a.col(0).setOnes();
    a.col(1) = (pi * s.kappa.array()).cos().matrix();
    const Eigen::Vector2d c = a.colPivHouseholderQr().solve(e);
    const double res = (e - a * c).norm() / e.norm();
    return {c[0], -c[1], res};
}

// Exact Bloch decomposition of grid states: every FFT bin p = kappa + 2j
// belongs to one quasimomentum class; each class is diagonalized with the
// plane-wave Hamiltonian restricted to the grid's momenta.
class BlochProjector {
public:
    BlochProjector(const ContinuumParams& c, std::shared_ptr<const FftPlan> plan = nullptr)
        : n_(c.points), cells_(c.cells()), plan_(plan ? std::move(plan) : std::make_shared<FftPlan>(c.points)) {
        c.validate();
        const int per_class = n_ / cells_;
        classes_.resize(cells_);
        for (int k = 0; k < n_; ++k) {
            const int q = k < n_ / 2 ? k : k - n_;
            const int j = floor_div(q + cells_ / 2, cells_);
            const int r = q - j * cells_;  // in [-cells/2, cells/2)
            classes_[r + cells_ / 2].bins.push_back({j, k});
        }
        for (int r = 0; r < cells_; ++r) {
            auto& cl = classes_[r];
            std::sort(cl.bins.begin(), cl.bins.end());
            require(static_cast<int>(cl.bins.size()) == per_class, "inconsistent Bloch class sizes");
            const double kappa = 2.0 * (r - cells_ / 2) / cells_;
            RMatrix h = RMatrix::Zero(per_class, per_class);
            for (int a = 0; a < per_class; ++a) {
                const double pa = kappa + 2.0 * cl.bins[a].first;
                h(a, a) = pa * pa - 0.5 * c.depth;
                if (a + 1 < per_class) h(a, a + 1) = h(a + 1, a) = -0.25 * c.depth;
            }
            Eigen::SelfAdjointEigenSolver<RMatrix> es(h);
            if (es.info() != Eigen::Success)
                throw NumericalAbort("Bloch decomposition failed at kappa class " + std::to_string(r));
            cl.kappa = kappa;
            cl.energies = es.eigenvalues();
            cl.vectors = es.eigenvectors();
        }
    }

    // Fraction of ||psi||^2 in each of the lowest `bands` bands.
    std::vector<double> band_populations(const CVector& psi, int bands) const {
        FftBuffer buf = to_momentum(psi);
        std::vector<double> pop(bands, 0.0);
        double total = 0.0;
        for (const auto& cl : classes_) {
            CVector amp(cl.bins.size());
            for (std::size_t a = 0; a < cl.bins.size(); ++a) amp[a] = buf[cl.bins[a].second];
            total += amp.squaredNorm();
            for (int b = 0; b < bands && b < cl.vectors.cols(); ++b)
                pop[b] += std::norm(cl.vectors.col(b).cast<cplx>().dot(amp));
        }
        for (double& x : pop) x /= total;
        return pop;
    }

    // Keeps only the components in the lowest `bands` bands.
    CVector project(const CVector& psi, int bands = 1) const {
        FftBuffer buf = to_momentum(psi);
        for (const auto& cl : classes_) {
            CVector amp(cl.bins.size());
            for (std::size_t a = 0; a < cl.bins.size(); ++a) amp[a] = buf[cl.bins[a].second];
            CVector kept = CVector::Zero(amp.size());
            for (int b = 0; b < bands && b < cl.vectors.cols(); ++b) {
                const CVector v = cl.vectors.col(b).cast<cplx>();
                kept += v * v.dot(amp);
            }
            for (std::size_t a = 0; a < cl.bins.size(); ++a) buf[cl.bins[a].second] = kept[a];
        }
        plan_->backward(buf);
        CVector out(n_);
        for (int i = 0; i < n_; ++i) out[i] = buf[i] / static_cast<double>(n_);
        return out;
    }

    // Periodic Bloch function of band `band` at the class closest to kappa,
    // sampled on the grid, with max |u| = 1.
    CVector bloch_function(double kappa, int band = 0) const {
        int best = 0;
        for (int r = 1; r < cells_; ++r)
            if (std::abs(classes_[r].kappa - kappa) < std::abs(classes_[best].kappa - kappa)) best = r;
        const auto& cl = classes_[best];
        FftBuffer buf(n_);
        std::fill(buf.data(), buf.data() + n_, cplx{});
        for (std::size_t a = 0; a < cl.bins.size(); ++a) buf[cl.bins[a].second] = cl.vectors(a, band);
        plan_->backward(buf);
        CVector out(n_);
        for (int i = 0; i < n_; ++i) out[i] = buf[i];
        return out / out.cwiseAbs().maxCoeff();
    }

private:
    struct KappaClass {
        std::vector<std::pair<int, int>> bins;  // (j, fft index) sorted by j
        double kappa = 0.0;
        RVector energies;
        RMatrix vectors;
    };

    static int floor_div(int a, int b) { return (a >= 0) ? a / b : -((-a + b - 1) / b); }

    FftBuffer to_momentum(const CVector& psi) const {
        require(psi.size() == n_, "state size does not match the grid");
        FftBuffer buf(n_);
        for (int i = 0; i < n_; ++i) buf[i] = psi[i];
        plan_->forward(buf);
        return buf;
    }

    int n_;
    int cells_;
    std::shared_ptr<const FftPlan> plan_;
    std::vector<KappaClass> classes_;
};

// Gaussian envelope exp(-(z - z0)^2 / (4 sigma^2)) times the kappa = 0 ground
// Bloch function, projected onto the ground band and normalized to
// dz * sum |psi|^2 = 1.
inline GridState prepare_ground_band_packet(const ContinuumParams& c, double sigma, double center = 0.0,
                                            const BlochProjector* projector = nullptr) {
    require(sigma > pi, "packet width must cover several lattice wells (sigma > pi)");
    const ContinuumGrid grid(c);
    std::unique_ptr<BlochProjector> own;
    if (!projector) {
        own = std::make_unique<BlochProjector>(c);
        projector = own.get();
    }
    const CVector u0 = projector->bloch_function(0.0, 0);
    CVector psi(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double x = grid.z[i] - center;
        psi[i] = std::exp(-x * x / (4.0 * sigma * sigma)) * u0[i];
    }
    const double before = psi.squaredNorm();
    CVector projected = projector->project(psi, 1);
    const double after = projected.squaredNorm();
    if (after < 0.9 * before)
        throw ConfigError("packet too narrow: ground-band projection keeps only " + std::to_string(after / before) +
                          " of the norm");
    projected /= std::sqrt(after * grid.dz);
    return {projected, 0.0, 0.0, 0.0};
}

// ---------------------------------------------------------------- observables

// Trapezoid integral of f over the measurement window.
template <class F>
double window_integral(const ContinuumGrid& g, F&& f) {
    double s = 0.0;
    for (Eigen::Index i = g.window_first; i <= g.window_last; ++i)
        s += trapezoid_weight(static_cast<std::size_t>(i), static_cast<std::size_t>(g.window_first),
                              static_cast<std::size_t>(g.window_last)) *
             f(i);
    return s * g.dz;
}

inline double survival_probability(const ContinuumGrid& g, const GridState& s) {
    require(s.psi.size() == g.size(), "state size does not match the grid");
    return window_integral(g, [&](Eigen::Index i) { return std::norm(s.psi[i]); });
}

inline double survival_probability(const ContinuumParams& c, const GridState& s) {
    require(c.window >= 20.0 * pi - 1e-9, "survival window must span at least [-20 pi, 20 pi]");
    return survival_probability(ContinuumGrid(c), s);
}

// Spectral derivative d psi / dz.
inline CVector spectral_derivative(const ContinuumGrid& g, const FftPlan& plan, const CVector& psi) {
    const auto n = g.size();
    FftBuffer buf(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) buf[i] = psi[i];
    plan.forward(buf);
    for (Eigen::Index i = 0; i < n; ++i) buf[i] *= I * g.p[i] / static_cast<double>(n);
    plan.backward(buf);
    CVector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d[i] = buf[i];
    return d;
}

// <v> = int_window psi^* (-2i d/dz) psi dz, optionally divided by P(t).
inline double mean_velocity_grid(const ContinuumGrid& g, const FftPlan& plan, const GridState& s,
                                 bool normalize = false) {
    const CVector d = spectral_derivative(g, plan, s.psi);
    const double v = window_integral(g, [&](Eigen::Index i) { return 2.0 * (std::conj(s.psi[i]) * d[i]).imag(); });
    if (!normalize) return v;
    return v / survival_probability(g, s);
}

// psi(z) <- cos(z) exp(i u z) psi(z)
inline GridState recoil_apply(const ContinuumGrid& g, const GridState& s, double u) {
    require(std::abs(u) <= 1.0, "recoil projection u must satisfy |u| <= 1");
    GridState out = s;
    for (Eigen::Index i = 0; i < g.size(); ++i) out.psi[i] *= std::cos(g.z[i]) * std::polar(1.0, u * g.z[i]);
    return out;
}

// ---------------------------------------------------------------- model

// Split-operator propagator and stochastic-engine model on the grid.
// Immutable after construction; per-thread scratch in Workspace.
class ContinuumModel {
public:
    using State = GridState;

    struct Workspace {
        FftBuffer buf;
        CVector recoil;
    };

    ContinuumModel(ContinuumParams params, double dt)
        : c_(std::move(params)), dt_(dt), grid_(c_), plan_(std::make_shared<FftPlan>(c_.points)) {
        require(finite(dt) && dt > 0.0, "time step must be positive");
        const auto n = grid_.size();
        half_potential_.resize(n);
        kinetic_.resize(n);
        derivative_.resize(n);
        mask_ = RVector::Ones(n);
        cos_ = RVector(n);
        recoil_weight_ = RVector(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double z = grid_.z[i];
            const double v = -c_.depth * std::cos(z) * std::cos(z) + c_.force * z;
            half_potential_[i] = std::polar(1.0, -0.5 * v * dt_);
            kinetic_[i] = std::polar(1.0 / static_cast<double>(n), -grid_.p[i] * grid_.p[i] * dt_);
            derivative_[i] = I * grid_.p[i] / static_cast<double>(n);
            cos_[i] = std::cos(z);
            recoil_weight_[i] = cos_[i] * cos_[i];
            const double d_low = z - c_.z_min;
            const double d_high = c_.z_max - z;
            const double d = std::min(d_low, d_high);
            if (c_.mask_width > 0.0 && d < c_.mask_width)
                mask_[i] = std::pow(std::cos(0.5 * pi * (c_.mask_width - d) / c_.mask_width), 0.125);
        }
        low_end_ = 0;
        while (low_end_ < n / 2 && mask_[low_end_] < 1.0) ++low_end_;
        high_begin_ = n;
        while (high_begin_ > n / 2 && mask_[high_begin_ - 1] < 1.0) --high_begin_;
        ground_width_ = band_spectrum(c_.depth, 1, 64, 21).width(0);
    }

    const ContinuumParams& params() const noexcept { return c_; }
    const ContinuumGrid& grid() const noexcept { return grid_; }
    const FftPlan& plan() const noexcept { return *plan_; }
    std::shared_ptr<const FftPlan> shared_plan() const noexcept { return plan_; }
    double dt() const noexcept { return dt_; }
    double gamma() const noexcept { return c_.gamma; }
    Eigen::Index size() const noexcept { return grid_.size(); }
    double bloch_period() const noexcept { return c_.bloch_period(); }
    double max_rate() const { return std::max({std::abs(c_.bloch_frequency()), c_.gamma, ground_width_}); }
    const RVector& mask() const noexcept { return mask_; }

    Workspace make_workspace() const { return {FftBuffer(static_cast<std::size_t>(size())), CVector(size())}; }

    // exp(-iV dt/2) exp(-i p^2 dt) exp(-iV dt/2), then the absorbing mask.
    void propagate(State& s, Workspace& w) const {
        const auto n = size();
        auto b = w.buf.vec();
        b.array() = half_potential_.array() * s.psi.array();
        plan_->forward(w.buf);
        b.array() *= kinetic_.array();
        plan_->backward(w.buf);
        s.psi.array() = half_potential_.array() * b.array();
        double lost_low = 0.0, lost_high = 0.0;
        for (Eigen::Index i = 0; i < low_end_; ++i) {
            lost_low += std::norm(s.psi[i]) * (1.0 - mask_[i] * mask_[i]);
            s.psi[i] *= mask_[i];
        }
        for (Eigen::Index i = high_begin_; i < n; ++i) {
            lost_high += std::norm(s.psi[i]) * (1.0 - mask_[i] * mask_[i]);
            s.psi[i] *= mask_[i];
        }
        s.absorbed_low += lost_low * grid_.dz;
        s.absorbed_high += lost_high * grid_.dz;
        s.t += dt_;
    }

    // l_j(u) = cos(z_j) exp(i u z_j); the phase is built by recurrence and
    // re-anchored every 256 points.
    void fill_recoil(double u, CVector& out) const {
        const auto n = size();
        const cplx step = std::polar(1.0, u * grid_.dz);
        for (Eigen::Index start = 0; start < n; start += 256) {
            cplx f = std::polar(1.0, u * grid_.z[start]);
            const auto stop = std::min<Eigen::Index>(n, start + 256);
            for (Eigen::Index i = start; i < stop; ++i) {
                out[i] = cos_[i] * f;
                f *= step;
            }
        }
    }

    const RVector& recoil_weight() const noexcept { return recoil_weight_; }

    Sample observe(const State& s, Workspace& w) const {
        Sample out{};
        out[kNorm] = s.psi.squaredNorm() * grid_.dz;
        w.buf.vec() = s.psi;
        plan_->forward(w.buf);
        w.buf.vec().array() *= derivative_.array();
        plan_->backward(w.buf);
        double P = 0.0, z = 0.0, z2 = 0.0, v = 0.0, v2 = 0.0;
        const auto a = grid_.window_first, b = grid_.window_last;
        for (Eigen::Index i = a; i <= b; ++i) {
            const double wt = (i == a || i == b) ? 0.5 : 1.0;
            const double rho = std::norm(s.psi[i]);
            const double x = grid_.z[i];
            const cplx d = w.buf[i];
            P += wt * rho;
            z += wt * x * rho;
            z2 += wt * x * x * rho;
            v += wt * 2.0 * (std::conj(s.psi[i]) * d).imag();
            v2 += wt * 4.0 * std::norm(d);
        }
        out[kSurvival] = P * grid_.dz;
        out[kPosition] = z * grid_.dz;
        out[kPositionSq] = z2 * grid_.dz;
        out[kVelocity] = v * grid_.dz;
        out[kVelocitySq] = v2 * grid_.dz;
        out[kAbsorbedLow] = s.absorbed_low;
        out[kAbsorbedHigh] = s.absorbed_high;
        return out;
    }

    void check(const State& s) const {
        if (s.psi.size() != size()) throw NumericalAbort("grid state has the wrong size");
        if (!all_finite(s.psi)) throw NumericalAbort("non-finite wave function samples");
    }

private:
    ContinuumParams c_;
    double dt_;
    ContinuumGrid grid_;
    std::shared_ptr<const FftPlan> plan_;
    CVector half_potential_, kinetic_, derivative_;
    RVector mask_, cos_, recoil_weight_;
    Eigen::Index low_end_ = 0, high_begin_ = 0;
    double ground_width_ = 0.0;
};

// Single split step (convenience; builds a model each call).
inline GridState split_step(const GridState& psi, const ContinuumParams& c, double dt) {
    const ContinuumModel m(c, dt);
    auto w = m.make_workspace();
    GridState out = psi;
    m.propagate(out, w);
    return out;
}

}  // namespace bloch
