//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tests/unit/test_impedance.cc
//---------------------------------------------------------------------------//
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "sipmtwin/impedance/Impedance.hh"

using namespace sipmtwin;

namespace
{
ReflectionSweep grid(std::size_t n, double f0 = 10e6, double f1 = 5e9)
{
    ReflectionSweep s;
    for (std::size_t i = 0; i < n; ++i)
    {
        s.points.push_back({f0 + (f1 - f0) * i / double(n - 1), {0, 0}, false});
    }
    return s;
}

ReflectionSweep constant(ReflectionSweep s, Complex g)
{
    for (auto& p : s.points)
    {
        p.s11 = g;
    }
    return s;
}

//! Series R + j omega L
ImpedanceSpectrum series_rl(ReflectionSweep const& g, double r, double l)
{
    ImpedanceSpectrum z;
    for (auto const& p : g.points)
    {
        z.points.push_back(
            {p.frequency, {r, 2 * constants::pi * p.frequency * l}, false, false});
    }
    return z;
}
}  // namespace

//---------------------------------------------------------------------------//
TEST(Conversion, Examples)
{
    EXPECT_EQ(gamma_to_impedance({0, 0}, 50), Complex(50, 0));
    EXPECT_EQ(gamma_to_impedance({-1, 0}, 50), Complex(0, 0));
    EXPECT_NEAR(std::abs(gamma_to_impedance({0.5, 0}, 50) - Complex(150, 0)),
                0, 1e-12);
}

TEST(Conversion, OpenCircuitIsFlaggedNotFatal)
{
    auto s = constant(grid(3), {0, 0});
    s.points[1].s11 = {1, 0};
    auto const z = s11_to_impedance(s);
    EXPECT_TRUE(z.points[1].open_circuit);
    EXPECT_TRUE(std::isinf(z.points[1].z.real()));
    EXPECT_FALSE(z.points[0].open_circuit);
}

TEST(Conversion, RoundTripAndPassivity)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> r(0, 0.99), ph(-constants::pi, constants::pi);
    for (int i = 0; i < 10000; ++i)
    {
        Complex const g = std::polar(r(rng), ph(rng));
        Complex const z = gamma_to_impedance(g, 50);
        EXPECT_GE(z.real(), 0.0);
        Complex const back = impedance_to_gamma(z, 50);
        ASSERT_LE(std::abs(back - g), 1e-9 * std::max(std::abs(g), 1e-3));
        // And the other direction
        ASSERT_LE(std::abs(gamma_to_impedance(back, 50) - z), 1e-9 * std::abs(z));
    }
}

//---------------------------------------------------------------------------//
TEST(Osl, IdealStandardsAreIdentity)
{
    auto const g = grid(50);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.7, 0.7);
    auto dut = g;
    for (auto& p : dut.points)
    {
        p.s11 = {u(rng), u(rng)};
    }
    auto const out = osl_correct(dut, constant(g, {1, 0}), constant(g, {-1, 0}),
                                 constant(g, {0, 0}));
    for (std::size_t i = 0; i < g.size(); ++i)
    {
        EXPECT_LE(std::abs(out.points[i].s11 - dut.points[i].s11), 1e-15);
        EXPECT_FALSE(out.points[i].ill_conditioned);
    }
}

TEST(Osl, RecoversDutThroughKnownErrorBox)
{
    auto const g = grid(200);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.2, 0.2), m(0.6, 1.0),
        ph(-3.0, 3.0), r(0, 0.95);
    for (int trial = 0; trial < 50; ++trial)
    {
        auto dut = g, open_m = g, short_m = g, load_m = g;
        std::vector<Complex> truth;
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            // Frequency-dependent error box, forward model as the oracle
            ErrorTerms e{{u(rng), u(rng)}, {u(rng), u(rng)}, std::polar(m(rng), ph(rng))};
            truth.push_back(std::polar(r(rng), ph(rng)));
            dut.points[i].s11 = e.measure(truth.back());
            open_m.points[i].s11 = e.measure(1.0);
            short_m.points[i].s11 = e.measure(-1.0);
            load_m.points[i].s11 = e.measure(0.0);
        }
        auto const out = osl_correct(dut, open_m, short_m, load_m);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            ASSERT_LE(std::abs(out.points[i].s11 - truth[i]), 1e-9);
        }
    }
}

TEST(Osl, SolvedTermsMatchGenerator)
{
    ErrorTerms const e{{0.05, 0.02}, {0.1, -0.05}, {0.9, 0.1}};
    ErrorTerms got;
    ASSERT_TRUE(solve_error_terms(e.measure(1.0), e.measure(-1.0), e.measure(0.0), got));
    EXPECT_LE(std::abs(got.directivity - e.directivity), 1e-14);
    EXPECT_LE(std::abs(got.source_match - e.source_match), 1e-14);
    EXPECT_LE(std::abs(got.tracking - e.tracking), 1e-14);
}

TEST(Osl, DegenerateFrequencyFlaggedAlone)
{
    auto const g = grid(10);
    auto open_m = constant(g, {1, 0});
    auto load_m = constant(g, {0, 0});
    load_m.points[4].s11 = open_m.points[4].s11;
    auto const dut = constant(g, {0.3, 0.1});
    auto const out = osl_correct(dut, open_m, constant(g, {-1, 0}), load_m);
    for (std::size_t i = 0; i < g.size(); ++i)
    {
        EXPECT_EQ(out.points[i].ill_conditioned, i == 4);
    }
    auto const z = s11_to_impedance(out);
    EXPECT_TRUE(z.points[4].ill_conditioned);
}

TEST(Osl, GridMismatchRejected)
{
    auto const g = grid(10);
    auto const other = grid(10, 11e6);
    EXPECT_THROW(osl_correct(g, other, g, g), InvalidArgument);
    EXPECT_THROW(osl_correct(g, g, grid(9), g), InvalidArgument);
}

//---------------------------------------------------------------------------//
TEST(SummarizeBelow, Trivial)
{
    auto const g = grid(20);
    auto const low = series_rl(g, 1, 0);
    EXPECT_EQ(summarize_below(low, 50), g.points.back().frequency);
    auto const high = series_rl(g, 60, 0);
    EXPECT_EQ(summarize_below(high, 50), 0.0);
    EXPECT_THROW(summarize_below(ImpedanceSpectrum{}, 50), EmptyInput);
}

TEST(SummarizeBelow, InductiveCrossingMatchesLinearScan)
{
    auto const g = grid(500);
    double const l = 2.27e-9;
    auto const z = series_rl(g, 0.0909, l);
    double oracle = 0;
    for (auto const& p : z.points)
    {
        if (std::hypot(p.z.real(), p.z.imag()) >= 50)
        {
            break;
        }
        oracle = p.frequency;
    }
    double const f = summarize_below(z, 50);
    EXPECT_EQ(f, oracle);
    EXPECT_GT(f, 3.4e9);
    EXPECT_LT(f, 3.6e9);
    // Last grid point at or below the analytic crossing
    double const crossing
        = std::sqrt(50.0 * 50 - 0.0909 * 0.0909) / (2 * constants::pi * l);
    EXPECT_LE(f, crossing);
    EXPECT_GT(f + (5e9 - 10e6) / 499, crossing);
}

TEST(SummarizeBelow, SkipsIllConditionedPoints)
{
    auto const g = grid(10);
    auto z = series_rl(g, 10, 0);
    z.points[3].z = {1e6, 0};
    z.points[3].ill_conditioned = true;
    EXPECT_EQ(summarize_below(z, 50), g.points.back().frequency);
    z.points[3].ill_conditioned = false;
    EXPECT_EQ(summarize_below(z, 50), g.points[2].frequency);
}

//---------------------------------------------------------------------------//
TEST(Touchstone, FormatsAgree)
{
    std::istringstream ri("! comment\n# MHz S RI R 50\n100 0.5 0\n200 0 0.5 ! tail\n");
    std::istringstream ma("# GHz S MA R 50\n0.1 0.5 0\n0.2 0.5 90\n");
    std::istringstream db("# khz s db r 75\n100000 -6.0205999132796239 0\n");
    auto const a = read_touchstone(ri);
    auto const b = read_touchstone(ma);
    auto const c = read_touchstone(db);
    ASSERT_EQ(a.size(), 2u);
    ASSERT_EQ(b.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i)
    {
        EXPECT_DOUBLE_EQ(a.points[i].frequency, b.points[i].frequency);
        EXPECT_LE(std::abs(a.points[i].s11 - b.points[i].s11), 1e-15);
    }
    EXPECT_EQ(c.reference_impedance, 75);
    EXPECT_DOUBLE_EQ(c.points[0].frequency, 100e6);
    EXPECT_NEAR(c.points[0].s11.real(), 0.5, 1e-12);
}

TEST(Touchstone, RoundTripIsExact)
{
    auto s = grid(101);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.7, 0.7);
    for (auto& p : s.points)
    {
        p.s11 = {u(rng), u(rng)};
    }
    std::stringstream ss;
    write_touchstone(ss, s);
    auto const back = read_touchstone(ss);
    ASSERT_EQ(back.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
    {
        EXPECT_EQ(back.points[i].frequency, s.points[i].frequency);
        EXPECT_EQ(back.points[i].s11, s.points[i].s11);
    }
    EXPECT_NO_THROW(back.validate());
}

TEST(Touchstone, RejectsUnknownOption)
{
    std::istringstream bad("# Hz Y RI R 50\n");
    EXPECT_THROW(read_touchstone(bad), InvalidArgument);
}

TEST(Sweep, Validation)
{
    auto s = grid(5);
    EXPECT_NO_THROW(s.validate());
    s.points[2].s11 = {1.1, 0};
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = grid(5, 10e6, 6e9);
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = grid(5);
    std::swap(s.points[1], s.points[2]);
    EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(ImpedanceCsv, Header)
{
    ImpedanceSpectrum z;
    z.points.push_back({1e9, {3, 4}, false, false});
    std::ostringstream os;
    write_impedance_csv(os, z);
    EXPECT_EQ(os.str(),
              "freq_hz,re_z,im_z,abs_z\n" + format_number(1e9) + ",3,4,5\n");
}

TEST(ReflectionCsv, Read)
{
    std::istringstream in("freq_hz,re_s11,im_s11\n1e6,0.1,-0.2\n\n2e6,0,0\n");
    auto const s = read_reflection_csv(in, 75);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.points[0].s11, Complex(0.1, -0.2));
    EXPECT_EQ(s.reference_impedance, 75);
}
