#include "esrsim/config.hpp"
#include "esrsim/error.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace esrsim;

namespace {

std::string default_path() { return std::string(ESRSIM_SOURCE_DIR) + "/configs/default.yaml"; }

std::string default_text() {
    std::ifstream is(default_path());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool mentions(const ConfigReport& r, const std::string& needle) {
    return r.to_string().find(needle) != std::string::npos;
}

}  // namespace

TEST(Config, DefaultIsClean) {
    const auto r = validate_config_text(default_text());
    EXPECT_TRUE(r.ok()) << r.to_string();
    const auto c = load_config(default_path());
    EXPECT_TRUE(c.seed_set);
    EXPECT_NEAR(c.cavity.omega0, constants::two_pi * 7.24e9, 1.0);
    EXPECT_EQ(c.coupling_bins, 50);
    EXPECT_NEAR(c.sequence.pi.amplitude, 7.9e5, 0.01e5);
    EXPECT_FALSE(c.sequence.pi.ideal);
}

TEST(Config, NegativeKappa2NamesCavity) {
    const auto r = validate_config_text(default_text(), {"cavity.kappa2_per_s=-5"});
    ASSERT_FALSE(r.ok());
    EXPECT_TRUE(mentions(r, "CavityParams")) << r.to_string();
}

TEST(Config, ZeroLorentzianWidthNamesDistribution) {
    const auto r = validate_config_text(default_text(), {"line.kind=lorentzian", "line.width_Hz=0"});
    ASSERT_FALSE(r.ok());
    EXPECT_TRUE(mentions(r, "FrequencyDistribution")) << r.to_string();
}

TEST(Config, AllIssuesListed) {
    const auto r = validate_config_text(default_text(), {"cavity.kappa2_per_s=-5", "solver.rtol=0", "bogus_key=1"});
    EXPECT_GE(r.issues.size(), 3u);
    EXPECT_TRUE(mentions(r, "bogus_key"));
    EXPECT_THROW(parse_config(default_text(), {"solver.rtol=0"}), InvalidInput);
}

TEST(Config, ParseErrorCarriesLocation) {
    try {
        parse_config("cavity:\n  f0_Hz: [1, 2\n");
        FAIL();
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
    }
}

TEST(Config, OverridesAndHash) {
    const auto a = parse_config(default_text());
    const auto b = parse_config(default_text(), {"sequence.echoes=650"});
    EXPECT_EQ(b.sequence.echoes, 650);
    EXPECT_NE(a.hash, b.hash);
    EXPECT_EQ(a.hash, parse_config(default_text()).hash);
    EXPECT_EQ(a.hash_hex().size(), 16u);
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_THROW(apply_overrides("a: 1", {"novalue"}), InvalidInput);
}

TEST(Config, DetectionGainInDb) {
    const auto c = parse_config(default_text(), {"detection.gain_dB=30"});
    EXPECT_NEAR(c.noise.gain, 1000.0, 1e-9);
}

TEST(Config, TransitionsList) {
    const auto c = parse_config(default_text(), {"spectrum.transitions=[[4,-4,5,-5]]"});
    ASSERT_EQ(c.spectrum.transitions.size(), 1u);
    EXPECT_EQ(c.spectrum.transitions[0].upper, label(5, -5));
}

TEST(TraceCsv, RoundTripIsExact) {
    TimeTrace t;
    t.t0 = 1.0 / 3.0;
    t.dt = 1e-7;
    t.seed = 17;
    for (int k = 0; k < 50; ++k) {
        t.samples.emplace_back(std::sin(k * 0.1) / 7.0, std::cos(k) * 1e-13);
        t.sz_total.push_back(-1e5 + k / 3.0);
        t.sminus_total.emplace_back(k / 9.0, -k / 11.0);
    }
    std::stringstream ss;
    write_trace_csv(ss, t, {{"config_hash", "0123456789abcdef"}});
    CsvHeader h;
    const auto r = read_trace_csv(ss, &h);
    EXPECT_EQ(h.at("config_hash"), "0123456789abcdef");
    EXPECT_EQ(r.t0, t.t0);
    EXPECT_EQ(r.dt, t.dt);
    EXPECT_EQ(r.samples, t.samples);
    EXPECT_EQ(r.sz_total, t.sz_total);
    EXPECT_EQ(r.sminus_total, t.sminus_total);
}

TEST(TraceCsv, PhaseCycleCancelsOffset) {
    TimeTrace a, b;
    a.dt = b.dt = 1e-7;
    for (int k = 0; k < 10; ++k) {
        a.samples.emplace_back(2.0 + k, 1.0);
        b.samples.emplace_back(2.0 - k, 1.0);
    }
    const auto c = phase_cycle(a, b);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(c.samples[k], complex(k, 0.0));
}
