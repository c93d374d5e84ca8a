#include <gtest/gtest.h>

#include <cmath>

#include "roughmkv/coefficients.hpp"
#include "roughmkv/families.hpp"
#include "roughmkv/random.hpp"

using namespace roughmkv;

namespace {

EmpiricalMeasure random_measure(std::size_t N, std::size_t d, std::uint64_t seed) {
    std::vector<double> pts(N * d);
    const RandomStream s(seed, StreamTag::test_draws, 1);
    for (std::size_t k = 0; k < pts.size(); ++k) pts[k] = s.normal(k);
    return EmpiricalMeasure(d, std::move(pts));
}

std::vector<double> random_vector(std::size_t len, std::uint64_t seed, std::uint64_t index) {
    std::vector<double> v(len);
    const RandomStream s(seed, StreamTag::test_draws, index);
    for (std::size_t k = 0; k < len; ++k) v[k] = s.normal(k);
    return v;
}

CoefficientSet with_rough(const Dimensions& dm, RoughFamily fam) {
    return CoefficientSet(dm, families::zero_drift(), families::zero_diffusion(), std::move(fam));
}

/// Central difference of x -> f(t, x, mu) in direction e_j, compared against dx_f.
double dx_consistency(const CoefficientSet& c, std::span<const double> x, const EmpiricalMeasure& mu) {
    const auto& dm = c.dims();
    const std::size_t d = dm.d, n = dm.n;
    std::vector<double> dxf(d * d * n), fp(d * n), fm(d * n);
    c.dx_f(0.0, x, mu, dxf);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> xp(x.begin(), x.end()), xm = xp;
        xp[j] += h;
        xm[j] -= h;
        c.f(0.0, xp, mu, fp);
        c.f(0.0, xm, mu, fm);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k)
                worst = std::max(worst, std::abs((fp[i * n + k] - fm[i * n + k]) / (2 * h) - dxf[(i * d + j) * n + k]));
    }
    return worst;
}

}  // namespace

TEST(Eval, ShapesAndErrors) {
    const Dimensions dm{2, 3, 2};
    const CoefficientSet c(dm, families::linear_mean_field_drift(dm, -1.0, 0.5), families::constant_diffusion(dm, 0.7),
                           families::moment_sine(dm, 0.3, 0.2));
    const auto mu = random_measure(5, 2, 1);
    const std::vector<double> x = {0.1, -0.2};
    EXPECT_EQ(eval(c, Coefficient::b, 0.0, x, mu).shape, (std::vector<std::size_t>{2}));
    EXPECT_EQ(eval(c, Coefficient::sigma, 0.0, x, mu).shape, (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(eval(c, Coefficient::f, 0.0, x, mu).shape, (std::vector<std::size_t>{2, 2}));
    EXPECT_EQ(eval(c, Coefficient::f_prime, 0.0, x, mu).shape, (std::vector<std::size_t>{2, 2, 2}));
    const std::vector<double> bad = {0.1};
    EXPECT_THROW(eval(c, Coefficient::b, 0.0, bad, mu), std::invalid_argument);
    EXPECT_THROW(EmpiricalMeasure(2, {}), std::invalid_argument);
    EXPECT_THROW(EmpiricalMeasure(1, {std::nan("")}), std::invalid_argument);
}

TEST(Eval, LinearMeanFieldDriftHandValue) {
    const Dimensions dm{1, 1, 1};
    const CoefficientSet c(dm, families::linear_mean_field_drift(dm, -1.0, 0.5), families::zero_diffusion(),
                           families::zero_rough(dm));
    const EmpiricalMeasure mu(1, {1.0, 2.0, 6.0});  // mean 3
    const std::vector<double> x = {2.0};
    EXPECT_DOUBLE_EQ(eval(c, Coefficient::b, 0.0, x, mu)[0], -2.0 + 1.5);
    EXPECT_TRUE(c.drift_is_zero() == false);
    EXPECT_FALSE(c.measure_free());
}

TEST(Eval, AffineDiffusionAndCovariance) {
    const Dimensions dm{2, 2, 1};
    const CoefficientSet c(dm, families::zero_drift(), families::affine_diffusion(dm, 1.0, 0.5),
                           families::zero_rough(dm));
    const EmpiricalMeasure mu(2, {0.0, 0.0});
    const std::vector<double> x = {2.0, -2.0};
    std::vector<double> a(4);
    c.a(0.0, x, mu, a);
    EXPECT_DOUBLE_EQ(a[0], 4.0);
    EXPECT_DOUBLE_EQ(a[3], 0.0);
    EXPECT_DOUBLE_EQ(a[1], 0.0);
}

TEST(Families, SpatialDerivativesMatchFiniteDifferences) {
    const Dimensions dm{2, 1, 2};
    const auto mu = random_measure(7, 2, 3);
    const std::vector<double> x = {0.3, -0.4};
    for (auto fam : {families::affine_rough(dm, 0.7, 0.1), families::sine_rough(dm, 0.8, 1.3),
                     families::moment_sine(dm, 0.5, 0.4), families::moment_linear(dm, 0.2, -0.3, 0.1),
                     families::gaussian_convolution(dm, 0.6, 0.9), families::sine_convolution(dm, 0.5)}) {
        const auto c = with_rough(dm, fam);
        EXPECT_LE(dx_consistency(c, x, mu), 1e-8);
    }
}

TEST(Families, MeasureDependenceFlags) {
    const Dimensions dm{1, 1, 1};
    EXPECT_TRUE(with_rough(dm, families::zero_rough(dm)).rough_is_zero());
    EXPECT_TRUE(with_rough(dm, families::affine_rough(dm, 1.0, 0.0)).measure_free());
    EXPECT_FALSE(with_rough(dm, families::moment_sine(dm, 1.0, 1.0)).measure_free());
    EXPECT_TRUE(with_rough(dm, families::moment_sine(dm, 1.0, 1.0)).lions_constant_in_v());
    EXPECT_FALSE(with_rough(dm, families::sine_convolution(dm, 1.0)).lions_constant_in_v());
    EXPECT_DOUBLE_EQ(with_rough(dm, families::moment_sine(dm, 0.5, -0.25)).declared_bound(), 0.75);
}

TEST(Families, CustomFamilyIsAcceptedButUncertified) {
    const Dimensions dm{1, 1, 1};
    CustomFamily fam;
    fam.f = [](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) { out[0] = x[0]; };
    fam.measure_dependent = false;
    const auto c = with_rough(dm, fam);
    EXPECT_FALSE(c.certified());
    const EmpiricalMeasure mu(1, {0.0});
    const std::vector<double> x = {2.5};
    EXPECT_DOUBLE_EQ(eval(c, Coefficient::f, 0.0, x, mu)[0], 2.5);
    EXPECT_TRUE(with_rough(dm, families::moment_sine(dm, 1, 1)).certified());
}

TEST(Lions, ConvolutionFamilyFiniteDifference) {
    const Dimensions dm{2, 1, 2};
    for (std::uint64_t r = 0; r < 20; ++r) {
        const auto c = with_rough(dm, families::gaussian_convolution(dm, 0.8, 1.1));
        const auto mu = random_measure(16, 2, 100 + r);
        const auto x = random_vector(2, r, 2);
        const auto dir = random_vector(32, r, 3);
        const auto chk = lions_fd_check(c, 0.0, x, mu, dir, 1e-4);
        EXPECT_LE(chk.relative_error, 1e-4);
    }
}

TEST(Lions, MomentFamilyFiniteDifference) {
    const Dimensions dm{1, 1, 2};
    for (std::uint64_t r = 0; r < 20; ++r) {
        const auto c = with_rough(dm, families::moment_sine(dm, 0.7, 0.9));
        const auto mu = random_measure(9, 1, 200 + r);
        const auto x = random_vector(1, r, 4);
        const auto dir = random_vector(9, r, 5);
        EXPECT_LE(lions_fd_check(c, 0.0, x, mu, dir, 1e-4).relative_error, 1e-4);
    }
}

TEST(Lions, MeasureFreeFamilyHasZeroLionsDerivative) {
    const Dimensions dm{1, 1, 1};
    const auto c = with_rough(dm, families::sine_rough(dm, 1.0, 1.0));
    const auto mu = random_measure(4, 1, 7);
    const std::vector<double> x = {0.2};
    EXPECT_EQ(lions_derivative(c, 0.0, x, mu, mu.particle(0)).max_abs(), 0.0);
    const auto chk = lions_fd_check(c, 0.0, x, mu, random_vector(4, 1, 1), 1e-4);
    EXPECT_EQ(chk.relative_error, 0.0);
    EXPECT_THROW(lions_fd_check(c, 0.0, x, mu, random_vector(4, 1, 1), 0.0), std::invalid_argument);
    EXPECT_THROW(lions_fd_check(c, 0.0, x, mu, random_vector(3, 1, 1), 1e-4), std::invalid_argument);
}

TEST(GammaPrime, ConstantFamilyGivesZero) {
    const Dimensions dm{2, 1, 2};
    const auto c = with_rough(dm, families::constant_rough(dm, 0.4));
    const auto mu = random_measure(5, 2, 1);
    const std::vector<double> x = {1.0, 2.0};
    EXPECT_EQ(gamma_prime_integrand(c, 0.0, x, mu).max_abs(), 0.0);
}

TEST(GammaPrime, MeasureFreeLinearHandValue) {
    // f(x) = a x + b in 1-D: Phi = f'(x) f(x) = a (a x + b).
    const Dimensions dm{1, 1, 1};
    const auto c = with_rough(dm, families::affine_rough(dm, 0.5, 0.2));
    const EmpiricalMeasure mu(1, {0.0});
    const std::vector<double> x = {3.0};
    EXPECT_DOUBLE_EQ(gamma_prime_integrand(c, 0.0, x, mu)[0], 0.5 * (0.5 * 3.0 + 0.2));
}

TEST(GammaPrime, MomentLinearHandValue) {
    // phi(x, m) = a x + c m: Phi = a f(x) + c <mu, f>, f(y) = a y + c m.
    const Dimensions dm{1, 1, 1};
    const double a = 0.5, cc = 0.25;
    const auto c = with_rough(dm, families::moment_linear(dm, a, cc));
    const EmpiricalMeasure mu(1, {1.0, 3.0});  // m = 2
    const std::vector<double> x = {4.0};
    const double fx = a * 4.0 + cc * 2.0;
    const double fmean = a * 2.0 + cc * 2.0;
    EXPECT_NEAR(gamma_prime_integrand(c, 0.0, x, mu)[0], a * fx + cc * fmean, 1e-15);
}

TEST(GammaPrime, ConvolutionMatchesDirectSum) {
    // Non-constant-in-v Lions derivative: compare against an explicit triple loop.
    const Dimensions dm{1, 1, 1};
    const auto c = with_rough(dm, families::sine_convolution(dm, 0.7));
    const auto mu = random_measure(6, 1, 9);
    const std::vector<double> x = {0.3};
    std::vector<double> fx(1), dxf(1), lions(1), fz(1);
    c.f(0.0, x, mu, fx);
    c.dx_f(0.0, x, mu, dxf);
    double expect = dxf[0] * fx[0];
    for (std::size_t z = 0; z < mu.size(); ++z) {
        c.lions_f(0.0, x, mu, mu.particle(z), lions);
        c.f(0.0, mu.particle(z), mu, fz);
        expect += lions[0] * fz[0] / static_cast<double>(mu.size());
    }
    EXPECT_NEAR(gamma_prime_integrand(c, 0.0, x, mu)[0], expect, 1e-14);
}
