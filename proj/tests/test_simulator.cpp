#include <gtest/gtest.h>

#include <cmath>

#include "roughmkv/families.hpp"
#include "roughmkv/simulator.hpp"
#include "roughmkv/weak_checker.hpp"

using namespace roughmkv;

namespace {

CoefficientSet make(const Dimensions& dm, DriftField b, DiffusionField s, RoughFamily f) {
    return CoefficientSet(dm, std::move(b), std::move(s), std::move(f));
}

GridRoughPath driver(std::size_t n, std::size_t cells, std::uint64_t seed = 3, double alpha = 0.45) {
    return brownian_lift(seed, n, TimeGrid::uniform(1.0, cells), 16, Convention::stratonovich, alpha);
}

bool same_flow(const MeasureFlow& a, const MeasureFlow& b) {
    if (a.snapshots.size() != b.snapshots.size()) return false;
    for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
        const auto pa = a.at(k).points(), pb = b.at(k).points();
        if (!std::equal(pa.begin(), pa.end(), pb.begin(), pb.end())) return false;
    }
    return true;
}

}  // namespace

TEST(InitialLaw, SamplingAndErrors) {
    const auto e = sample_initial(initial_laws::Gaussian{{1.0, -1.0}, 0.5}, 4000, 2, 9);
    EXPECT_EQ(e.size(), 4000u);
    double m0 = 0.0;
    for (std::size_t i = 0; i < 4000; ++i) m0 += e.particle(i)[0] / 4000.0;
    EXPECT_NEAR(m0, 1.0, 4 * 0.5 / std::sqrt(4000.0));
    EXPECT_THROW(sample_initial(initial_laws::PointMass{{0.0}}, 0, 1, 1), std::invalid_argument);
    EXPECT_THROW(sample_initial(initial_laws::PointMass{{0.0, 1.0}}, 3, 1, 1), std::invalid_argument);
    EXPECT_THROW(sample_initial(initial_laws::Explicit{{1.0, 2.0}}, 3, 1, 1), std::invalid_argument);
    EXPECT_THROW(sample_initial(initial_laws::Uniform{1.0, 1.0}, 3, 1, 1), std::invalid_argument);
}

TEST(StepDavie, ConstantRoughVectorFieldIsExactShift) {
    const Dimensions dm{2, 1, 2};
    const auto c = make(dm, families::zero_drift(), families::zero_diffusion(), families::constant_rough(dm, 0.3));
    const auto rp = driver(2, 32);
    SimulationConfig cfg{10, 1, Scheme::DavieFull, initial_laws::Gaussian{{0.0, 0.0}, 1.0}};
    const auto res = simulate(cfg, c, rp);
    const auto dW = rp.increment(0, 32);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t a = 0; a < 2; ++a)
            EXPECT_NEAR(res.flow.terminal().particle(i)[a] - res.flow.at(0).particle(i)[a], 0.3 * (dW[0] + dW[1]),
                        1e-12);
}

TEST(StepDavie, AllZeroSingleParticleIsConstant) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::zero_drift(), families::zero_diffusion(), families::zero_rough(dm));
    SimulationConfig cfg{1, 5, Scheme::DavieFull, initial_laws::PointMass{{0.7}}};
    const auto res = simulate(cfg, c, driver(1, 8));
    for (const auto& mu : res.flow.snapshots) EXPECT_EQ(mu.particle(0)[0], 0.7);
}

TEST(StepDavie, GeometricExponentialConverges) {
    // dX = X dW (Stratonovich): X_T = X_0 exp(dW_{0,T}). Mean error over driver seeds decays at rate ~1.
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::zero_drift(), families::zero_diffusion(), families::affine_rough(dm, 1.0, 0.0));
    const std::vector<std::size_t> cells = {16, 32, 64, 128, 256};
    std::vector<double> err(cells.size(), 0.0), h;
    for (std::uint64_t seed = 0; seed < 32; ++seed) {
        const auto fine = driver(1, 2048, 100 + seed);
        const double exact = std::exp(fine.increment(0, 2048)[0]);
        for (std::size_t l = 0; l < cells.size(); ++l) {
            const auto rp = coarsen(fine, 2048 / cells[l]);
            SimulationConfig cfg{1, 1, Scheme::DavieFull, initial_laws::PointMass{{1.0}}};
            err[l] += std::abs(simulate(cfg, c, rp).flow.terminal().particle(0)[0] - exact) / 32.0;
        }
    }
    for (auto k : cells) h.push_back(1.0 / static_cast<double>(k));
    for (std::size_t l = 1; l < cells.size(); ++l) EXPECT_LT(err[l], err[l - 1]);
    EXPECT_GT(loglog_slope(h, err), 0.75);
}

TEST(StepDavie, MeanFieldLinearDriftTracksOde) {
    // f = 0, b = a x + c m, sigma = 1: the particle mean follows m' = (a + c) m.
    const Dimensions dm{1, 1, 1};
    const double a = -1.0, cc = 0.5, x0 = 1.0;
    const auto c = make(dm, families::linear_mean_field_drift(dm, a, cc), families::constant_diffusion(dm, 1.0),
                        families::zero_rough(dm));
    const std::size_t N = 2000, K = 64;
    SimulationConfig cfg{N, 4, Scheme::DavieFull, initial_laws::PointMass{{x0}}};
    const auto res = simulate(cfg, c, driver(1, K));
    // Euler recursion for the mean is exact for the discrete mean: m_{k+1} = (1 + (a + c) h) m_k + noise.
    const double ode = x0 * std::exp(a + cc);
    EXPECT_NEAR(res.flow.terminal().mean()[0], ode, 3.0 / std::sqrt(static_cast<double>(N)));
}

TEST(Simulate, DeterministicGivenSeed) {
    const Dimensions dm{1, 1, 2};
    const auto c = make(dm, families::sine_mean_field_drift(dm, 0.5, 0.3), families::constant_diffusion(dm, 0.4),
                        families::moment_sine(dm, 0.4, 0.3));
    const auto rp = driver(2, 16);
    SimulationConfig cfg{50, 77, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 1.0}};
    EXPECT_TRUE(same_flow(simulate(cfg, c, rp).flow, simulate(cfg, c, rp).flow));
    cfg.threads = 3;
    SimulationConfig one = cfg;
    one.threads = 1;
    EXPECT_TRUE(same_flow(simulate(cfg, c, rp).flow, simulate(one, c, rp).flow));
    SimulationConfig other = cfg;
    other.seed = 78;
    EXPECT_FALSE(same_flow(simulate(cfg, c, rp).flow, simulate(other, c, rp).flow));
}

TEST(Simulate, ExchangeabilityUnderPermutation) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::linear_mean_field_drift(dm, -0.5, 0.4), families::affine_diffusion(dm, 0.3, 0.1),
                        families::gaussian_convolution(dm, 0.5, 1.0));
    const auto rp = driver(1, 16);
    const auto init = sample_initial(initial_laws::Gaussian{{0.0}, 1.0}, 9, 1, 3);
    ParticleEnsemble perm = init;
    const std::vector<std::size_t> sigma = {4, 0, 8, 2, 6, 1, 7, 3, 5};
    for (std::size_t i = 0; i < 9; ++i) {
        perm.states[i] = init.states[sigma[i]];
        perm.stream_ids[i] = init.stream_ids[sigma[i]];
    }
    const auto a = simulate(init, c, rp, 5).flow, b = simulate(perm, c, rp, 5).flow;
    for (std::size_t k = 0; k < a.grid.size(); ++k)
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(b.at(k).particle(i)[0], a.at(k).particle(sigma[i])[0]);
}

TEST(Simulate, MeasureFreeParticlesAreIndependent) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::linear_mean_field_drift(dm, -0.5, 0.0), families::constant_diffusion(dm, 0.3),
                        families::sine_rough(dm, 0.5, 1.0));
    ASSERT_TRUE(c.measure_free());
    const auto rp = driver(1, 16);
    const auto init = sample_initial(initial_laws::Gaussian{{0.0}, 1.0}, 6, 1, 3);
    ParticleEnsemble zeroed = init;
    zeroed.states[2] = 0.0;
    const auto a = simulate(init, c, rp, 5).flow, b = simulate(zeroed, c, rp, 5).flow;
    for (std::size_t k = 0; k < a.grid.size(); ++k)
        for (std::size_t i = 0; i < 6; ++i)
            if (i != 2) EXPECT_EQ(a.at(k).particle(i)[0], b.at(k).particle(i)[0]);
}

TEST(Simulate, ZeroRoughFieldIgnoresTheRoughPath) {
    const Dimensions dm{1, 1, 2};
    const auto c = make(dm, families::sine_mean_field_drift(dm, 0.5, 0.5), families::constant_diffusion(dm, 0.5),
                        families::zero_rough(dm));
    SimulationConfig cfg{20, 2, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 1.0}};
    const auto a = simulate(cfg, c, driver(2, 16, 1)).flow;
    const auto b = simulate(cfg, c, driver(2, 16, 2)).flow;
    EXPECT_TRUE(std::equal(a.terminal().points().begin(), a.terminal().points().end(),
                           b.terminal().points().begin()));
}

TEST(StepDavie, NoLiftDiffersByExactlyTheSecondLevelTerm) {
    const Dimensions dm{1, 1, 2};
    const auto c = make(dm, families::sine_mean_field_drift(dm, 0.5, 0.2), families::constant_diffusion(dm, 0.3),
                        families::moment_sine(dm, 0.6, 0.4));
    const auto rp = driver(2, 8);
    const auto ens = sample_initial(initial_laws::Gaussian{{0.0}, 1.0}, 12, 1, 1);
    const auto noise = particle_noise(ens, 1, rp.grid(), 9);
    const std::span<const double> dB(noise.data() + 3 * 12, 12);
    StepTerms terms;
    StepReport rep;
    const auto full = step_davie(ens, c, rp, rp.grid()[3], rp.grid()[4], dB, Scheme::DavieFull, 1, &rep, &terms);
    const auto nolift = step_davie(ens, c, rp, rp.grid()[3], rp.grid()[4], dB, Scheme::DavieNoLift);
    for (std::size_t i = 0; i < 12; ++i) {
        const double base = ens.states[i] + terms.drift[i] + terms.brownian[i] + terms.first_level[i];
        EXPECT_EQ(nolift.states[i], ens.states[i] + (terms.drift[i] + terms.brownian[i] + terms.first_level[i] + 0.0));
        EXPECT_NEAR(full.states[i] - nolift.states[i], terms.second_level[i], 1e-15);
        (void)base;
    }
    EXPECT_GT(rep.second_level, 0.0);
    EXPECT_GE(rep.max_increment, rep.first_level * 0.0);
}

TEST(StepDavie, Errors) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::zero_drift(), families::zero_diffusion(), families::constant_rough(dm, 1.0));
    const auto rp = driver(1, 8);
    const auto ens = sample_initial(initial_laws::PointMass{{0.0}}, 3, 1, 1);
    const std::vector<double> dB(3, 0.0);
    EXPECT_THROW(step_davie(ens, c, rp, 0.0, 0.25, dB), std::invalid_argument);
    EXPECT_THROW(step_davie(ens, c, rp, 0.0, 0.1, dB), std::invalid_argument);
    EXPECT_THROW(step_davie(ens, c, driver(2, 8), 0.0, 0.125, dB), std::invalid_argument);
    EXPECT_THROW(step_davie(ens, c, rp, 0.0, 0.125, std::vector<double>(2, 0.0)), std::invalid_argument);
}

TEST(Simulate, NumericalAbortCarriesTime) {
    const Dimensions dm{1, 1, 1};
    DriftField blow;
    blow.fn = [](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
        out[0] = 1e200 * (1.0 + x[0] * x[0]);
    };
    const auto c = make(dm, blow, families::zero_diffusion(), families::zero_rough(dm));
    SimulationConfig cfg{2, 1, Scheme::DavieFull, initial_laws::PointMass{{1.0}}};
    try {
        simulate(cfg, c, driver(1, 8));
        FAIL() << "expected NumericalAbort";
    } catch (const NumericalAbort& e) {
        EXPECT_GT(e.time, 0.0);
        EXPECT_LE(e.time, 1.0);
    }
}

TEST(Simulate, MassIsExactlyOne) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::sine_mean_field_drift(dm, 0.5, 0.5), families::constant_diffusion(dm, 0.5),
                        families::moment_sine(dm, 0.5, 0.5));
    SimulationConfig cfg{333, 1, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 1.0}};
    const auto flow = simulate(cfg, c, driver(1, 16)).flow;
    for (const auto& mu : flow.snapshots) EXPECT_EQ(pairing(mu, [](std::span<const double>) { return 1.0; }), 1.0);
}

TEST(Simulate, IndependentRunsAgreeAtMonteCarloScale) {
    // Two independent N-particle systems under the same rough path: terminal W2 of the
    // Moment-family system is within 4 N^{-1/2} scale, scale = sqrt(N) W2 of the measure-free system.
    const Dimensions dm{1, 1, 1};
    const auto rp = driver(1, 32);
    const auto moment = make(dm, families::zero_drift(), families::constant_diffusion(dm, 0.5),
                             families::moment_sine(dm, 0.5, 0.5));
    const auto free = make(dm, families::zero_drift(), families::constant_diffusion(dm, 0.5),
                           families::sine_rough(dm, 0.5, 1.0));
    const std::size_t N = 2000;
    auto w2 = [&](const CoefficientSet& c) {
        SimulationConfig a{N, 101, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 1.0}};
        SimulationConfig b{N, 202, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 1.0}};
        return wasserstein2_1d(simulate(a, c, rp).flow.terminal(), simulate(b, c, rp).flow.terminal());
    };
    const double scale = std::sqrt(static_cast<double>(N)) * w2(free);
    EXPECT_LE(w2(moment), 4.0 * scale / std::sqrt(static_cast<double>(N)));
}

TEST(Controlled, ConstantFieldHasZeroRemainder) {
    const Dimensions dm{1, 1, 2};
    const auto c = make(dm, families::zero_drift(), families::zero_diffusion(), families::constant_rough(dm, 0.8));
    const auto rp = driver(2, 32);
    SimulationConfig cfg{20, 1, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 1.0}};
    const auto flow = simulate(cfg, c, rp).flow;
    const auto d = controlled_diagnostics(flow, rp, c, 2);
    EXPECT_LE(d.remainder_quotient, 1e-12);
    EXPECT_THROW(controlled_diagnostics(flow, rp, c, 3), std::invalid_argument);
}

TEST(Controlled, BrownianOnlyMatchesBrownianQuotient) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::zero_drift(), families::constant_diffusion(dm, 1.0), families::zero_rough(dm));
    const auto rp = driver(1, 32);
    const std::size_t N = 200;
    SimulationConfig cfg{N, 6, Scheme::DavieFull, initial_laws::PointMass{{0.0}}};
    const auto flow = simulate(cfg, c, rp).flow;
    // Oracle: the same Brownian increments read straight from the particle streams.
    const auto ens = sample_initial(cfg.initial, N, 1, cfg.seed);
    const auto noise = particle_noise(ens, 1, rp.grid(), cfg.seed);
    double oracle = 0.0;
    for (std::size_t s = 0; s <= 32; ++s)
        for (std::size_t t = s + 1; t <= 32; ++t) {
            std::vector<double> sq(N);
            for (std::size_t i = 0; i < N; ++i) {
                double b = 0.0;
                for (std::size_t k = s; k < t; ++k) b += noise[k * N + i];
                sq[i] = b * b;
            }
            oracle = std::max(oracle, std::sqrt(order_invariant_mean(sq)) / std::pow(rp.grid()[t] - rp.grid()[s], 0.45));
        }
    EXPECT_NEAR(controlled_diagnostics(flow, rp, c, 2).holder_quotient, oracle, 1e-9 * oracle);
}

TEST(Controlled, StableUnderRefinement) {
    const Dimensions dm{1, 1, 1};
    const auto c = make(dm, families::sine_mean_field_drift(dm, 0.3, 0.3), families::constant_diffusion(dm, 0.3),
                        families::moment_sine(dm, 0.5, 0.3));
    const auto fine = driver(1, 64, 8);
    SimulationConfig cfg{200, 3, Scheme::DavieFull, initial_laws::Gaussian{{0.0}, 0.5}};
    const auto q1 = controlled_diagnostics(simulate(cfg, c, coarsen(fine, 2)).flow, coarsen(fine, 2), c, 2);
    const auto q2 = controlled_diagnostics(simulate(cfg, c, fine).flow, fine, c, 2);
    EXPECT_NEAR(q2.holder_quotient / q1.holder_quotient, 1.0, 0.5);
    EXPECT_TRUE(std::isfinite(q2.remainder_quotient));
}
