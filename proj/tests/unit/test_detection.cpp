#include "esrsim/constants.hpp"
#include "esrsim/detection.hpp"
#include "esrsim/error.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>

using namespace esrsim;

namespace {

TimeTrace gaussian_pulse(double amp, double dt = 1e-7) {
    TimeTrace t;
    t.dt = dt;
    t.units = "sqrt_photons_per_s";
    for (int k = 0; k < 800; ++k) {
        const double x = (k - 400) * dt / 10e-6;
        t.samples.emplace_back(amp * std::exp(-x * x), 0.0);
    }
    return t;
}

}  // namespace

TEST(NoiseModel, InputReferredNoise) {
    NoiseModel m;
    m.n_syst = 20.0;
    m.gain = 100.0;
    m.mode = AmpMode::Nondegenerate;
    EXPECT_NEAR(m.input_noise_x(), 0.5 + 0.99 * 0.5 + 0.2, 1e-12);
    EXPECT_EQ(m.input_noise_x(), m.input_noise_y());

    m.mode = AmpMode::Degenerate;
    EXPECT_NEAR(m.input_noise_x(), 0.5 + 0.2, 1e-12);
    EXPECT_NEAR(m.input_noise_y(), 0.5 + 2000.0, 1e-9);
    EXPECT_NEAR(m.gain_x() * m.gain_y(), 1.0, 1e-12);

    NoiseModel off;
    off.mode = AmpMode::Off;
    EXPECT_NEAR(off.input_noise_x(), 0.5 + 50.0, 1e-12);
    off.gain = 10.0;
    EXPECT_THROW(off.validate(), InvalidInput);
    EXPECT_THROW(parse_amp_mode("phase_sensitive"), InvalidInput);
}

TEST(Amplify, DeterministicAndScaled) {
    const auto sig = gaussian_pulse(1e3);
    NoiseModel m;
    m.gain = 4.0;
    const auto a = amplify(sig, m, 42), b = amplify(sig, m, 42), c = amplify(sig, m, 43);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, c.samples);

    NoiseModel quiet = m;
    quiet.n_eq = 0.0;
    quiet.n_amp = 0.0;
    const auto q = amplify(sig, quiet, 1);
    for (std::size_t k = 0; k < sig.size(); ++k) EXPECT_NEAR(q.samples[k].real(), 2.0 * sig.samples[k].real(), 1e-9);
}

TEST(Amplify, NoiseVariance) {
    TimeTrace zero;
    zero.dt = 1e-6;
    zero.samples.assign(200000, complex(0.0, 0.0));
    NoiseModel m;
    m.gain = 10.0;
    const auto out = amplify(zero, m, 7);
    double vx = 0.0, vy = 0.0;
    for (const auto& s : out.samples) {
        vx += s.real() * s.real();
        vy += s.imag() * s.imag();
    }
    vx /= out.size();
    vy /= out.size();
    const double expect = m.gain * m.input_noise_x() / (2.0 * zero.dt);
    EXPECT_NEAR(vx / expect, 1.0, 0.01);
    EXPECT_NEAR(vy / expect, 1.0, 0.01);
}

TEST(MatchedFilter, NormalizedAndOptimal) {
    const auto sig = gaussian_pulse(1e3);
    const auto f = MatchedFilter::from_signal(sig, sig.t0, sig.end_time());
    EXPECT_NEAR(f.norm2(), 1.0, 1e-12);
    // |<s,u>| with u = s/|s| equals |s|
    double e = 0.0;
    for (const auto& s : sig.samples) e += std::norm(s) * sig.dt;
    EXPECT_NEAR(filter_output(sig, f), std::sqrt(e), 1e-9 * std::sqrt(e));
    EXPECT_NEAR(snr_matched_filter(sig, f, 2.0), std::sqrt(e), 1e-9 * std::sqrt(e));

    std::vector<double> flat(f.u.size(), 1.0);
    const auto box = MatchedFilter::from_samples(f.t0, f.dt, flat);
    EXPECT_LT(snr_matched_filter(sig, box, 2.0), snr_matched_filter(sig, f, 2.0));
    EXPECT_THROW(MatchedFilter::from_samples(0.0, 1e-7, {0.0, 0.0}), InvalidInput);
}

TEST(MonteCarlo, AgreesWithAnalytic) {
    const auto sig = gaussian_pulse(300.0);
    const auto f = MatchedFilter::from_signal(sig, sig.t0, sig.end_time());
    NoiseModel m;
    m.gain = 50.0;
    const auto mc = monte_carlo_snr(sig, f, m, 4000, 11);
    EXPECT_EQ(mc.trials, 4000);
    EXPECT_NEAR(mc.estimate, mc.expected, 4.0 * mc.standard_error);
    const auto again = monte_carlo_snr(sig, f, m, 4000, 11);
    EXPECT_EQ(mc.estimate, again.estimate);
}

TEST(Sensitivity, Formulas) {
    const double g = constants::two_pi * 55.0, kappa = constants::two_pi * 22e3;
    EXPECT_NEAR(nmin_conventional(g, 1.0, kappa, 1.0, 1.0 / kappa), 400.0, 1e-9);
    EXPECT_NEAR(nmin(g, 1.0, kappa, kappa / 2, kappa, 1.0), 400.0 * std::sqrt(2.0 / 3.0), 1e-9);
    // N_min gives unit SNR
    const double n = nmin(g, 0.8, kappa, 0.3 * kappa, 0.7 * kappa, 1.3);
    EXPECT_NEAR(snr_lorentzian(g, 0.8, n, kappa, 0.3 * kappa, 0.7 * kappa, 1.3), 1.0, 1e-12);
}

TEST(Sensitivity, CpmgGain) {
    const auto one = cpmg_snr_gain(1, 400e-6, 71e-3);
    EXPECT_NEAR(one.ratio, std::sqrt(71e-3 / 800e-6 * -std::expm1(-800e-6 / 71e-3)), 1e-12);
    EXPECT_NEAR(cpmg_snr_gain(650, 400e-6, 71e-3).ratio, 9.4177, 1e-4);
    EXPECT_FALSE(cpmg_snr_gain(10, 0.1, 0.05).valid);
}

TEST(Sensitivity, GainCurve) {
    const auto c = snr_vs_gain({1.0, 10.0, 1e9}, 1.0, 36.0);
    EXPECT_NEAR(c[0], 1.0 / 6.0, 1e-12);
    EXPECT_NEAR(c[1], std::sqrt(10.0 / 45.0), 1e-12);
    EXPECT_NEAR(c[2], 1.0, 1e-6);
}

TEST(Report, Json) {
    NoiseModel m;
    const auto j = nlohmann::json::parse(snr_report_json(3.5, 1.0, m, 9, "echo"));
    EXPECT_EQ(j.at("seed").get<int>(), 9);
    EXPECT_DOUBLE_EQ(j.at("snr").get<double>(), 3.5);
}
