#include "esrsim/error.hpp"
#include "esrsim/spin_model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace esrsim;

namespace {

// Closed-form levels for S = 1/2 with the field along z, H = B (ge Sz - gn Iz) + A S.I.
std::vector<double> breit_rabi(const SpinSystem& s, double b) {
    std::vector<double> e;
    const double dw = s.A * (s.I + 0.5);
    const double x = (s.gamma_e + s.gamma_n) * b / dw;
    for (double m = -s.I - 0.5; m <= s.I + 0.5 + 1e-9; m += 1.0) {
        if (std::abs(std::abs(m) - (s.I + 0.5)) < 1e-9) {
            const double sign = m > 0 ? 1.0 : -1.0;
            e.push_back(s.A * s.I / 2.0 + sign * (s.gamma_e / 2.0 - s.gamma_n * s.I) * b);
            continue;
        }
        const double root = 0.5 * dw * std::sqrt(1.0 + 4.0 * m * x / (2.0 * s.I + 1.0) + x * x);
        e.push_back(-s.A / 4.0 - s.gamma_n * b * m + root);
        e.push_back(-s.A / 4.0 - s.gamma_n * b * m - root);
    }
    std::sort(e.begin(), e.end());
    return e;
}

// |4,-4> -> |5,-5> from the 2x2 block {|up,-9/2>, |down,-7/2>}.
struct Stretched {
    double frequency;
    double sx;
};

Stretched stretched_transition(const SpinSystem& s, double b) {
    const double h11 = s.gamma_e * b / 2.0 + 4.5 * s.gamma_n * b - 2.25 * s.A;
    const double h22 = -s.gamma_e * b / 2.0 + 3.5 * s.gamma_n * b + 1.75 * s.A;
    const double h12 = 1.5 * s.A;
    const double mean = 0.5 * (h11 + h22), half = 0.5 * (h11 - h22);
    const double r = std::hypot(half, h12);
    const double lower = mean - r;
    // eigenvector of the lower level: (h12, lower - h11), normalized
    const double vx = h12, vy = lower - h11;
    const double c_up = vx / std::hypot(vx, vy);
    const double upper = 2.25 * s.A - (s.gamma_e / 2.0 - 4.5 * s.gamma_n) * b;  // |down,-9/2>
    return {upper - lower, 0.5 * std::abs(c_up)};
}

}  // namespace

TEST(SpinModel, DimensionAndHermiticity) {
    SpinSystem s;
    EXPECT_EQ(s.dimension(), 20);
    const auto h = build_hamiltonian(Field(1e-3, 2e-3, 5e-3), s);
    EXPECT_LT((h - h.adjoint()).norm(), 1e-6 * h.norm());
}

TEST(SpinModel, EigenvaluesMatchBreitRabi) {
    SpinSystem s;
    for (double b : {0.0, 1e-3, 5.16e-3, 0.1, 1.0}) {
        const auto pairs = diagonalize(build_hamiltonian(Field(0, 0, b), s));
        const auto ref = breit_rabi(s, b);
        ASSERT_EQ(pairs.values.size(), static_cast<long>(ref.size()));
        for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(pairs.values(k), ref[k], 1e-6 * s.A) << "B=" << b;
    }
}

TEST(SpinModel, ZeroFieldLabels) {
    SpinSystem s;
    const auto lv = eigensystem(s, Field(0, 0, 1e-6));
    int f4 = 0, f5 = 0;
    for (const auto& l : lv.labels) (l.twice_F == 8 ? f4 : f5)++;
    EXPECT_EQ(f4, 9);
    EXPECT_EQ(f5, 11);
    EXPECT_LT(lv.eigenvalues(lv.index_of(label(4, 0))), lv.eigenvalues(lv.index_of(label(5, 0))));
    EXPECT_THROW(lv.index_of(label(6, 0)), NotFound);
}

TEST(SpinModel, StretchedTransitionMatchesTwoLevelOracle) {
    SpinSystem s;
    for (double b : {2e-3, 5.16e-3, 8e-3}) {
        const auto lv = eigensystem(s, Field(0, 0, b));
        const int lo = lv.index_of(label(4, -4)), up = lv.index_of(label(5, -5));
        const auto ref = stretched_transition(s, b);
        EXPECT_NEAR(lv.eigenvalues(up) - lv.eigenvalues(lo), ref.frequency, 1e-6 * s.A);
        EXPECT_NEAR(sx_element(lv, s, lo, up), ref.sx, 1e-9);
        EXPECT_NEAR(transition_frequency(s, label(4, -4), label(5, -5), Field(0, 0, b)), ref.frequency, 1e-6 * s.A);
    }
}

TEST(SpinModel, CrossingFieldAndSlopeAgainstOracle) {
    SpinSystem s;
    const double f0 = 7.24e9;
    // bisection on the oracle
    double lo = 0.0, hi = 10e-3;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (stretched_transition(s, mid).frequency > f0 ? lo : hi) = mid;
    }
    const double b_ref = 0.5 * (lo + hi);
    const double h = 1e-7;
    const double slope_ref =
        (stretched_transition(s, b_ref + h).frequency - stretched_transition(s, b_ref - h).frequency) / (2 * h);
    const auto cf = find_crossing_field(s, label(4, -4), label(5, -5), f0, 0.0, 10e-3);
    EXPECT_NEAR(cf.field, b_ref, 1e-9);
    EXPECT_NEAR(cf.dfdB, slope_ref, 1e-4 * std::abs(slope_ref));
}

TEST(SpinModel, CrossingFieldIndependentOfDirection) {
    SpinSystem s;
    const auto z = find_crossing_field(s, label(4, -4), label(5, -5), 7.24e9, 0.0, 10e-3);
    const auto d = find_crossing_field(s, label(4, -4), label(5, -5), 7.24e9, 0.0, 10e-3,
                                       Eigen::Vector3d(1, 1, 1).normalized());
    EXPECT_NEAR(z.field, d.field, 1e-9);
}

TEST(SpinModel, CrossingFieldErrors) {
    SpinSystem s;
    EXPECT_THROW(find_crossing_field(s, label(4, -4), label(5, -5), 7.24e9, 0.0, 1e-3), NotFound);
}

TEST(SpinModel, HyperfineFitRecoversA) {
    SpinSystem truth;
    truth.A = 1.4712e9;
    std::vector<CrossingTarget> targets;
    for (auto [lo, up] : {std::pair{label(4, -4), label(5, -5)}, std::pair{label(4, -3), label(5, -4)}}) {
        const auto cf = find_crossing_field(truth, lo, up, 7.24e9, 0.0, 10e-3);
        targets.push_back({lo, up, cf.field});
    }
    SpinSystem guess;
    const double a = fit_hyperfine_constant(guess, targets, 7.24e9, 1.46e9, 1.48e9);
    EXPECT_NEAR(a, truth.A, 1e-6 * truth.A);
}

TEST(SpinModel, TransitionTableCsv) {
    SpinSystem s;
    const auto lv = eigensystem(s, Field(0, 0, 5.16e-3));
    const auto table = transition_table(lv, s);
    EXPECT_FALSE(table.empty());
    for (const auto& t : table) {
        EXPECT_GT(t.frequency, 0.0);
        EXPECT_LE(t.sx_element, 0.5 + 1e-12);
    }
    std::ostringstream os;
    write_transition_csv(os, table);
    EXPECT_EQ(os.str().rfind("lowerF,lower_mF,upperF,upper_mF,freq_Hz,sx,dfdB_Hz_per_T\n", 0), 0u);
    EXPECT_NE(os.str().find("\n4,-4,5,-5,"), std::string::npos);
}

TEST(SpinModel, InvalidSystem) {
    SpinSystem s;
    s.S = 0.3;
    EXPECT_THROW(s.validate(), InvalidInput);
}
