// Lattice Hamiltonian, recoil and velocity operators, hopping expansion,
// coherent Bloch oscillation.

#include "bloch/stochastic.hpp"
#include "bloch/tight_binding.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace bloch;

namespace {

TBParams lattice(int sites, double hopping, double force, double gamma = 0.0) {
    TBParams p;
    p.sites = sites;
    p.hopping = hopping;
    p.force = force;
    p.gamma = gamma;
    return p;
}

}  // namespace

TEST(TightBindingHamiltonian, ThreeSiteHoppingOnly) {
    const CMatrix h = build_tb_hamiltonian(lattice(3, 1.0, 0.0));
    CMatrix want(3, 3);
    want << 0.0, -0.5, 0.0, -0.5, 0.0, -0.5, 0.0, -0.5, 0.0;
    EXPECT_EQ((h - want).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TightBindingHamiltonian, ThreeSiteStarkOnly) {
    const CMatrix h = build_tb_hamiltonian(lattice(3, 0.0, 0.1));
    EXPECT_NEAR(h(0, 0).real(), -0.1 * pi, 1e-15);
    EXPECT_NEAR(h(1, 1).real(), 0.0, 1e-15);
    EXPECT_NEAR(h(2, 2).real(), 0.1 * pi, 1e-15);
    EXPECT_EQ(h(0, 1), cplx(0.0));
}

TEST(TightBindingHamiltonian, ExtendedHoppingsFillOuterDiagonals) {
    TBParams p = lattice(6, 1.0, 0.0);
    p.longer_hoppings = {0.2, -0.05};
    const CMatrix h = build_tb_hamiltonian(p);
    EXPECT_DOUBLE_EQ(h(0, 2).real(), -0.1);
    EXPECT_DOUBLE_EQ(h(3, 0).real(), 0.025);
    EXPECT_EQ(h(0, 4), cplx(0.0));
}

TEST(TightBindingHamiltonian, OpenChainSpectrumIsCosineBand) {
    // Hard-wall chain: eigenvalues -Delta cos(j pi / (N + 1)), j = 1..N.
    const int n = 201;
    const CMatrix h = build_tb_hamiltonian(lattice(n, 1.0, 0.0));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    std::vector<double> want;
    for (int j = 1; j <= n; ++j) want.push_back(-std::cos(j * pi / (n + 1)));
    std::sort(want.begin(), want.end());
    for (int j = 0; j < n; ++j) EXPECT_NEAR(es.eigenvalues()[j], want[j], 1e-12);
}

TEST(TightBindingHamiltonian, RejectsBadParameters) {
    EXPECT_THROW(build_tb_hamiltonian(lattice(2, 1.0, 0.0)), ConfigError);
    EXPECT_THROW(build_tb_hamiltonian(lattice(5, std::nan(""), 0.0)), ConfigError);
    EXPECT_THROW(build_tb_hamiltonian(lattice(5, 1.0, INFINITY)), ConfigError);
}

TEST(TightBindingHamiltonian, ExactlyHermitian) {
    TBParams p = lattice(40, 0.7, -0.13);
    p.longer_hoppings = {0.11, 0.03};
    const CMatrix h = build_tb_hamiltonian(p);
    const CMatrix v = velocity_operator_tb(p);
    EXPECT_EQ((h - h.adjoint()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((v - v.adjoint()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RecoilOperatorTB, SpecialValues) {
    const CVector a = recoil_operator_tb(0.0, 5, -2);  // sites -2..2
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(std::abs(a[i] - cplx((i % 2) ? -1.0 : 1.0)), 0.0, 1e-14);
    const CVector b = recoil_operator_tb(1.0, 7);
    for (int i = 0; i < 7; ++i) EXPECT_NEAR(std::abs(b[i] - cplx(1.0)), 0.0, 1e-13);
    const CVector c = recoil_operator_tb(0.5, 5, -2);
    EXPECT_NEAR(std::abs(c[4] - cplx(-1.0)), 0.0, 1e-14);  // l = 2
}

TEST(RecoilOperatorTB, UnitaryForRandomU) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        const CVector d = recoil_operator_tb(u(gen), 33);
        EXPECT_NEAR((d.cwiseAbs2().array() - 1.0).abs().maxCoeff(), 0.0, 1e-14);
    }
    EXPECT_THROW(recoil_operator_tb(1.0001, 5), ConfigError);
}

TEST(RecoilOperatorTB, ModelRecurrenceMatchesDirectEvaluation) {
    const TBParams p = lattice(161, 1.0, -0.1, 0.05);
    const TightBindingModel m(p, 0.025);
    CVector buf(p.sites);
    for (double u : {-1.0, -0.37, 0.0, 0.81, 1.0}) {
        m.fill_recoil(u, buf);
        const CVector direct = recoil_operator_tb(u, p.sites, p.first_site());
        EXPECT_LT((buf - direct).cwiseAbs().maxCoeff(), 1e-12) << "u=" << u;
    }
}

TEST(VelocityOperatorTB, BlochWaveExpectation) {
    // Plane wave on a hard-wall chain: N - 1 bonds carry current,
    // <v> = (N - 1)/N * (d Delta / hbar) sin(d kappa).
    const TBParams p = lattice(101, 1.0, 0.0);
    const CMatrix v = velocity_operator_tb(p);
    for (double kappa : {0.0, 0.13, 0.25, -0.4}) {
        const LatticeState s = bloch_wave(p, kappa);
        const double got = (s.psi.adjoint() * v * s.psi)(0, 0).real();
        EXPECT_NEAR(got, (100.0 / 101.0) * pi * std::sin(pi * kappa), 1e-12) << "kappa=" << kappa;
    }
    EXPECT_EQ(velocity_operator_tb(lattice(9, 0.0, 0.1)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(VelocityOperatorTB, ModelApplyMatchesMatrix) {
    TBParams p = lattice(31, 1.0, 0.05);
    p.longer_hoppings = {0.2};
    const TightBindingModel m(p, 0.01, 0);
    const LatticeState s = gaussian_wannier_packet(p, 3.0, 2.0);
    CVector out(p.sites);
    m.apply_velocity(s.psi, out);
    EXPECT_LT((out - velocity_operator_tb(p) * s.psi).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CoherentBlochReference, ClosedForm) {
    const TBParams p = lattice(11, 1.0, 0.1);
    const double w = p.bloch_frequency();
    const auto r0 = coherent_bloch_reference(p, 0.0);
    EXPECT_DOUBLE_EQ(r0.velocity, 0.0);
    EXPECT_DOUBLE_EQ(r0.position, 10.0);
    EXPECT_NEAR(coherent_bloch_reference(p, pi / (2.0 * w)).velocity, -pi, 1e-14);
    const auto r1 = coherent_bloch_reference(p, 2.0 * pi / w);
    EXPECT_NEAR(r1.velocity, 0.0, 1e-13);
    EXPECT_NEAR(r1.position, 10.0, 1e-12);
    EXPECT_THROW(coherent_bloch_reference(lattice(11, 1.0, 0.0), 1.0), ConfigError);
}

TEST(CoherentBlochReference, SimulatedBroadPacketFollowsIt) {
    // |psi_l|^2 ∝ exp(-2 l^2 / w^2) has quasimomentum variance 1 / (d^2 w^2),
    // so the packet velocity is the reference scaled by exp(-1 / (2 w^2)).
    TBParams p = lattice(161, 1.0, -0.1);
    const double dt = 0.01;
    const TightBindingModel m(p, dt);
    LatticeState s = gaussian_wannier_packet(p, 10.0);
    auto ws = m.make_workspace();
    const double v0 = pi, shrink = std::exp(-1.0 / 200.0);
    const auto steps = static_cast<int>(std::lround(3.0 * 20.0 / dt));
    double worst = 0.0;
    for (int n = 0; n <= steps; ++n) {
        if (n % 50 == 0) {
            const double v = m.observe(s, ws)[kVelocity];
            worst = std::max(worst, std::abs(v - shrink * coherent_bloch_reference(p, n * dt).velocity));
        }
        if (n < steps) m.propagate(s, ws);
    }
    EXPECT_LT(worst / v0, 1e-6);
}

TEST(CoherentBlochReference, PropagationIsUnitary) {
    TBParams p = lattice(81, 1.0, 0.2);
    p.longer_hoppings = {0.1};
    const TightBindingModel m(p, 0.02);
    LatticeState s = gaussian_wannier_packet(p, 6.0);
    auto ws = m.make_workspace();
    for (int n = 0; n < 1000; ++n) m.propagate(s, ws);
    EXPECT_NEAR(s.psi.squaredNorm(), 1.0, 1e-9);
}

TEST(HoppingExpansion, CosineBandGivesNearestNeighbourOnly) {
    std::vector<double> k, e;
    for (int i = 0; i < 64; ++i) {
        k.push_back(-1.0 + 2.0 * i / 64.0);
        e.push_back(-std::cos(pi * k.back()));
    }
    const auto h = hoppings_from_dispersion(k, e, pi);
    ASSERT_EQ(h.hoppings.size(), 1u);
    EXPECT_NEAR(h.hoppings[0], 1.0, 1e-13);
}

TEST(HoppingExpansion, ReproducesMultiHarmonicBand) {
    std::vector<double> k, e;
    for (int i = 0; i < 64; ++i) {
        k.push_back(-1.0 + 2.0 * i / 64.0);
        const double x = pi * k.back();
        e.push_back(0.3 - 0.8 * std::cos(x) - 0.1 * std::cos(2.0 * x) + 0.02 * std::cos(3.0 * x));
    }
    const auto h = hoppings_from_dispersion(k, e, pi);
    ASSERT_EQ(h.hoppings.size(), 3u);
    EXPECT_NEAR(h.hoppings[0], 0.8, 1e-13);
    EXPECT_NEAR(h.hoppings[1], 0.1, 1e-13);
    EXPECT_NEAR(h.hoppings[2], -0.02, 1e-13);
    for (std::size_t i = 0; i < k.size(); ++i)
        EXPECT_NEAR(tb_dispersion(h.hoppings, pi, k[i]) + 0.3, e[i], 1e-12);
}

TEST(HoppingExpansion, ConstantBandHasNoHopping) {
    std::vector<double> k, e;
    for (int i = 0; i < 32; ++i) {
        k.push_back(-1.0 + 2.0 * i / 32.0);
        e.push_back(-2.5);
    }
    const auto h = hoppings_from_dispersion(k, e, pi);
    for (double x : h.hoppings) EXPECT_EQ(x, 0.0);
}

TEST(EdgeMonitor, AbortsWhenPacketReachesTheEdge) {
    const TBParams p = lattice(41, 1.0, 0.0);
    const TightBindingModel m(p, 0.025);
    EXPECT_NO_THROW(m.check(gaussian_wannier_packet(p, 2.0)));
    EXPECT_THROW(m.check(gaussian_wannier_packet(p, 2.0, 15.0)), NumericalAbort);
    const TightBindingModel off(p, 0.025, 0);
    EXPECT_NO_THROW(off.check(gaussian_wannier_packet(p, 2.0, 15.0)));
}
