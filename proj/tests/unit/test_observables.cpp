#include "esrsim/error.hpp"
#include "esrsim/observables.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace esrsim;

TEST(EchoArea, RectangleRule) {
    TimeTrace t;
    t.dt = 1e-7;
    for (int k = 0; k < 1000; ++k) t.samples.emplace_back(3.0, -4.0);
    const auto e = echo_area(t, {20e-6, 40e-6, "echo"});
    EXPECT_NEAR(e.X, 3.0 * 20e-6, 1e-15);
    EXPECT_NEAR(e.Q, -4.0 * 20e-6, 1e-15);
    EXPECT_NEAR(e.A, 5.0 * 20e-6, 1e-15);
    EXPECT_NEAR(e.window, 20e-6, 1e-18);
    EXPECT_THROW(echo_area(t, {90e-6, 110e-6, "late"}), InvalidInput);
}

TEST(DecayFit, RecoversParameters) {
    std::vector<double> t, y;
    for (int i = 0; i < 12; ++i) {
        t.push_back(0.02 * i * i + 0.001);
        y.push_back(-2.0 * std::exp(-t.back() / 0.37) + 1.5);
    }
    const auto f = fit_decay(t, y, true);
    EXPECT_NEAR(f.time_constant, 0.37, 1e-8);
    EXPECT_NEAR(f.amplitude, -2.0, 1e-8);
    EXPECT_NEAR(f.offset, 1.5, 1e-8);
    EXPECT_LT(f.rms_residual, 1e-10);
}

TEST(DecayFit, NoisyDataStandardErrors) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 0.01);
    std::vector<double> t, y;
    for (int i = 0; i < 40; ++i) {
        t.push_back(0.5e-3 * (i + 1));
        y.push_back(std::exp(-t.back() / 8.9e-3) + nd(rng));
    }
    const auto f = fit_decay(t, y, false);
    EXPECT_EQ(f.offset, 0.0);
    EXPECT_NEAR(f.time_constant, 8.9e-3, 4.0 * f.time_constant_stderr);
    EXPECT_GT(f.time_constant_stderr, 0.0);
}

TEST(DecayFit, RejectsBadInput) {
    EXPECT_THROW(fit_decay({1, 2, 3}, {1, 2, 3}), InvalidInput);
    EXPECT_THROW(fit_decay({1, 1, 2, 3}, {1, 2, 3, 4}), InvalidInput);
}

TEST(Sweep, CsvHasHeader) {
    std::vector<SweepPoint> pts(2);
    pts[0].value = 5e-3;
    pts[1].value = 6e-3;
    std::ostringstream os;
    write_sweep_csv(os, pts, {{"config_hash", "abc"}});
    EXPECT_NE(os.str().find("# config_hash=abc"), std::string::npos);
    EXPECT_NE(os.str().find("sweep_value,A_e,X_e,Q_e,stderr"), std::string::npos);
}

TEST(Sweep, FieldOutOfRange) {
    SpectroConfig c;
    c.coupling.g = {50.0};
    c.coupling.weight = {1.0};
    c.transitions = {{label(4, -4), label(5, -5)}};
    EXPECT_THROW(field_sweep(c, {11e-3}), DomainError);
}

TEST(Sweep, SpectrumPeaksNearCrossing) {
    SpectroConfig c;
    c.coupling.g = {60.0};
    c.coupling.weight = {1.0};
    c.line.kind = LineShape::Lorentzian;
    c.line.width = 200e3;
    c.line.bins = 40;
    c.line.spacing = 5e3;
    c.n_total = 1e4;
    c.transitions = {{label(4, -4), label(5, -5)}};
    c.solver.max_step = 1e-5;
    const auto cross = find_crossing_field(c.spin, label(4, -4), label(5, -5), c.cavity.omega0 / constants::two_pi,
                                           0.0, 10e-3);
    const auto pts = field_sweep(c, {cross.field - 40e-6, cross.field, cross.field + 40e-6});
    EXPECT_GT(pts[1].echo.A, pts[0].echo.A);
    EXPECT_GT(pts[1].echo.A, pts[2].echo.A);
}

TEST(GoldenSection, FindsMaximum) {
    const double x = golden_section_maximize([](double v) { return -(v - 1.3) * (v - 1.3); }, 0.0, 3.0, 1e-9);
    EXPECT_NEAR(x, 1.3, 1e-7);
}
