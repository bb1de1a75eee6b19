//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tests/unit/test_frontend.cc
//---------------------------------------------------------------------------//
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "sipmtwin/frontend/Frontend.hh"

using namespace sipmtwin;

namespace
{
constexpr double two_pi = 2 * constants::pi;

CurrentPulseTrain one_pulse(double t, double peak, double rise, double decay)
{
    CurrentPulseTrain tr;
    tr.shape = PulseShape{rise, decay};
    tr.pulses.push_back({t, peak});
    return tr;
}

//! Brute-force first-order low-pass: y[n] = sum_k (1 - a) a^k x[n - k]
std::vector<double> convolve_low_pass(std::vector<double> const& x, double a)
{
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t n = 0; n < x.size(); ++n)
    {
        double w = 1 - a;
        for (std::size_t k = 0; k <= n; ++k)
        {
            y[n] += w * x[n - k];
            w *= a;
        }
    }
    return y;
}

//! Piecewise-linear triangle: rises from t_a to t_peak, falls to t_b
AnalogWaveform triangle(double t0, double dt, std::size_t n, double t_a,
                        double t_peak, double t_b, double height)
{
    AnalogWaveform w;
    w.t0 = t0;
    w.dt = dt;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        double const t = w.time(i);
        double v = 0;
        if (t > t_a && t <= t_peak)
        {
            v = height * (t - t_a) / (t_peak - t_a);
        }
        else if (t > t_peak && t < t_b)
        {
            v = height * (t_b - t) / (t_b - t_peak);
        }
        w.samples[i] = v;
    }
    return w;
}
}  // namespace

//---------------------------------------------------------------------------//
// SMALL-SIGNAL RELATIONS
//---------------------------------------------------------------------------//
TEST(InputImpedance, HandEvaluatedExample)
{
    PreampConfig c;
    EXPECT_NEAR(input_impedance(c), 1.0 / (0.01 * 0.01 * 1e4 * 11), 1e-15);
    EXPECT_NEAR(input_impedance(c), 0.0909, 1e-4);
}

TEST(InputImpedance, NoFeedbackCollapsesToPlainFollower)
{
    PreampConfig c;
    c.r_f = 0;
    EXPECT_EQ(input_impedance(c), 1.0 / (c.gm1 * c.gm2 * c.r_b1));
}

TEST(InputImpedance, DoublingLargeFeedbackHalves)
{
    PreampConfig c;
    c.r_f = 1e6;  // gmf r_f = 1e4
    double const z1 = input_impedance(c);
    c.r_f *= 2;
    EXPECT_NEAR(input_impedance(c) / z1, 0.5, 0.005);
}

TEST(InputImpedance, DecreasesInEveryParameter)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> f(1.01, 3.0);
    for (int trial = 0; trial < 200; ++trial)
    {
        PreampConfig base;
        base.gm1 *= f(rng);
        base.gm2 *= f(rng);
        base.gmf *= f(rng);
        base.r_f *= f(rng);
        base.r_b1 *= f(rng);
        double const z = input_impedance(base);
        double const k = f(rng);
        for (double PreampConfig::*m : {&PreampConfig::gm1, &PreampConfig::gm2,
                                       &PreampConfig::gmf, &PreampConfig::r_f,
                                       &PreampConfig::r_b1})
        {
            PreampConfig bumped = base;
            bumped.*m *= k;
            EXPECT_LT(input_impedance(bumped), z);
        }
    }
}

TEST(Transimpedance, Examples)
{
    PreampConfig c;
    c.mirror_ratio_n = 1;
    c.r_load = 1e3;
    EXPECT_EQ(transimpedance_gain(c), 1e3);
    c.mirror_ratio_n = 8;
    c.r_load = 500;
    EXPECT_EQ(transimpedance_gain(c), 4e3);
}

TEST(Transimpedance, IndependentOfImpedanceParameters)
{
    PreampConfig c;
    double const g = transimpedance_gain(c);
    for (double r : {0.0, 10.0, 1e3, 1e6})
    {
        c.r_f = r;
        c.r_b1 = 1 + r;
        EXPECT_EQ(transimpedance_gain(c), g);
    }
}

TEST(InputPole, Examples)
{
    EXPECT_NEAR(pole_frequency(50, 160e-12) / 19.9e6, 1.0, 0.002);
    EXPECT_NEAR(pole_frequency(25, 160e-12) / pole_frequency(50, 160e-12),
                2.0, 1e-12);
    EXPECT_NEAR(input_pole_frequency(PreampConfig{}, 160e-12) / 10.9e9,
                1.0, 0.005);
    EXPECT_THROW(input_pole_frequency(PreampConfig{}, 0), InvalidArgument);
}

//---------------------------------------------------------------------------//
// SAMPLING AND FILTERS
//---------------------------------------------------------------------------//
TEST(SampleCurrent, MatchesDirectPulseSum)
{
    CurrentPulseTrain tr;
    tr.shape = PulseShape{1e-9, 50e-9};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> when(-20e-9, 150e-9);
    for (int i = 0; i < 30; ++i)
    {
        tr.pulses.push_back({when(rng), 1e-4 * (1 + i % 3)});
    }
    std::sort(tr.pulses.begin(), tr.pulses.end(), [](auto& a, auto& b) {
        return a.fire_time < b.fire_time;
    });
    double const t0 = -5e-9, dt = 37e-12;
    std::size_t const n = 5000;
    auto const y = detail::sample_current(tr, t0, dt, n, 2.0);
    double peak = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        peak = std::max(peak, std::abs(2.0 * tr.current(t0 + i * dt)));
    }
    for (std::size_t i = 0; i < n; ++i)
    {
        ASSERT_NEAR(y[i], 2.0 * tr.current(t0 + i * dt), 1e-9 * peak)
            << "sample " << i;
    }
}

TEST(LowPass, RecursionMatchesConvolutionSum)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> x(800);
    for (auto& v : x)
    {
        v = g(rng);
    }
    double const dt = 1e-9, tau = 7e-9;
    auto const oracle = convolve_low_pass(x, std::exp(-dt / tau));

    auto inplace = x;
    detail::low_pass_inplace(inplace, dt, tau);
    detail::LowPass stream(dt, tau);
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        EXPECT_NEAR(inplace[i], oracle[i], 1e-12);
        EXPECT_NEAR(stream(x[i]), oracle[i], 1e-12);
    }
}

TEST(ShapePulse, MatchesBruteForceFilterChain)
{
    PreampConfig c;
    double const dt = 50e-12;
    auto const tr = one_pulse(1e-9, 1e-4, 1e-9, 50e-9);
    auto const w = shape_pulse(tr, c, dt, 120e-9, 0.0, 160e-12);

    std::vector<double> x(w.size());
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        x[i] = transimpedance_gain(c) * tr.current(w.time(i));
    }
    double const f_lp = std::min(input_pole_frequency(c, 160e-12),
                                 c.bandwidth_limit);
    auto const band = convolve_low_pass(x, std::exp(-dt * two_pi * f_lp));
    auto const base
        = convolve_low_pass(band, std::exp(-dt * two_pi * c.bypass_corner));
    double const scale = *std::max_element(band.begin(), band.end());
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        ASSERT_NEAR(w.samples[i], band[i] - base[i], 1e-9 * scale);
    }
}

TEST(ShapePulse, EmptyTrainGivesZeroWaveform)
{
    auto const w = shape_pulse(CurrentPulseTrain{}, PreampConfig{}, 10e-12, 5e-9);
    EXPECT_EQ(w.size(), 501u);
    for (double v : w.samples)
    {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(ShapePulse, RejectsUndersampling)
{
    PreampConfig c;
    c.bandwidth_limit = 1e9;
    EXPECT_THROW(shape_pulse(CurrentPulseTrain{}, c, 101e-12, 5e-9),
                 InvalidArgument);
    EXPECT_NO_THROW(shape_pulse(CurrentPulseTrain{}, c, 100e-12, 5e-9));
}

TEST(ShapePulse, LongTimeMeanVanishes)
{
    PreampConfig c;
    c.bandwidth_limit = 1e8;
    double const dt = 1e-9;
    auto const w = shape_pulse(one_pulse(0, 1e-4, 1e-9, 50e-9), c, dt, 50e-6);
    double const area = std::accumulate(w.samples.begin(), w.samples.end(), 0.0);
    double abs_area = 0;
    for (double v : w.samples)
    {
        abs_area += std::abs(v);
    }
    EXPECT_LT(std::abs(area), 1e-6 * abs_area);
    EXPECT_LT(std::abs(w.samples.back()), 1e-9 * abs_area);
}

TEST(ShapePulse, StepDecaysWithBypassTimeConstant)
{
    PreampConfig c;
    c.bandwidth_limit = 100e6;
    double const dt = 1e-9;
    // Rise far below and decay far above every filter constant: a step
    auto const w = shape_pulse(one_pulse(0, 1e-4, 0.1e-9, 1.0), c, dt, 1e-6);
    double const tau_expected = 1 / (two_pi * c.bypass_corner);
    auto const at = [&](double t) {
        return w.samples[static_cast<std::size_t>(std::lround(t / dt))];
    };
    double const tau_measured = 200e-9 / std::log(at(200e-9) / at(400e-9));
    EXPECT_NEAR(tau_measured / tau_expected, 1.0, 0.02);
}

TEST(ShapePulse, LinearInCurrent)
{
    PreampConfig c;
    CurrentPulseTrain tr;
    tr.shape = PulseShape{1e-9, 50e-9};
    tr.pulses = {{1e-9, 1e-4}, {4e-9, 3e-4}, {30e-9, 2e-4}};
    auto const w = shape_pulse(tr, c, 10e-12, 80e-9);
    for (double a : {0.5, 3.0, 1e3})
    {
        auto const wa = shape_pulse(tr.scaled(a), c, 10e-12, 80e-9);
        for (std::size_t i = 0; i < w.size(); ++i)
        {
            ASSERT_NEAR(wa.samples[i], a * w.samples[i],
                        1e-9 * std::abs(a * w.samples[i]) + 1e-300);
        }
    }
}

//---------------------------------------------------------------------------//
// ENERGY CHANNEL
//---------------------------------------------------------------------------//
TEST(EnergyChannel, ZeroChargeGivesZeroWaveform)
{
    auto const w = energy_channel_shape(CurrentPulseTrain{}, 200e-9, 1e-9, 1e-6);
    for (double v : w.samples)
    {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(EnergyChannel, SeparatedIdenticalPulsesGiveEqualPeaks)
{
    CurrentPulseTrain tr;
    tr.shape = PulseShape{1e-9, 30e-9};
    tr.pulses = {{10e-9, 1e-4}, {5e-6 + 0.37e-9, 1e-4}};
    auto const w = energy_channel_shape(tr, 200e-9, 1e-9, 10e-6);
    auto const mid = w.samples.begin() + 5000;
    double const p1 = *std::max_element(w.samples.begin(), mid);
    double const p2 = *std::max_element(mid, w.samples.end());
    EXPECT_NEAR(p2 / p1, 1.0, 0.01);
}

TEST(EnergyChannel, PeakLinearInCharge)
{
    auto const tr = one_pulse(0, 1e-4, 1e-9, 20e-9);
    auto const w1 = energy_channel_shape(tr, 200e-9, 1e-9, 2e-6);
    auto const w2 = energy_channel_shape(tr.scaled(2), 200e-9, 1e-9, 2e-6);
    double const p1 = *std::max_element(w1.samples.begin(), w1.samples.end());
    double const p2 = *std::max_element(w2.samples.begin(), w2.samples.end());
    EXPECT_NEAR(p2 / p1, 2.0, 0.04);
}

TEST(EnergyChannel, MatchesContinuousLeakyIntegrator)
{
    // tau y' = -y + g i(t); each exponential exp(-t/c) in i maps to
    // c (exp(-t/c) - exp(-t/tau)) / (c - tau)
    double const rise = 1e-9, decay = 15e-9, tau = 200e-9, gain = 1e3;
    auto const tr = one_pulse(0, 1e-4, rise, decay);
    auto const w = energy_channel_shape(tr, tau, 0.25e-9, 2e-6, 0.0, gain);
    auto const response = [&](double t) {
        auto term = [&](double c) {
            return c * (std::exp(-t / c) - std::exp(-t / tau)) / (c - tau);
        };
        return gain * 1e-4 / tr.shape.norm() * (term(decay) - term(rise));
    };
    double analytic_peak = 0;
    for (double t = 0; t < 2e-6; t += 0.05e-9)
    {
        analytic_peak = std::max(analytic_peak, response(t));
    }
    double const peak = *std::max_element(w.samples.begin(), w.samples.end());
    EXPECT_NEAR(peak / analytic_peak, 1.0, 0.02);
}

//---------------------------------------------------------------------------//
// DISCRIMINATION
//---------------------------------------------------------------------------//
TEST(Discriminate, NoCrossingNoHits)
{
    auto const w = triangle(0, 10e-12, 1000, 1e-9, 2e-9, 4e-9, 0.2);
    ComparatorConfig c;
    c.threshold = 0.3;
    EXPECT_TRUE(discriminate(w, c, 1).empty());
    EXPECT_THROW(crossing_slope(w, 0.3), NotFound);
}

TEST(Discriminate, NoiselessTriangleMatchesAnalyticCrossing)
{
    double const dt = 10e-12;
    ComparatorConfig c;
    c.threshold = 0.3;
    c.noise_rms = 0;
    c.min_pulse_width = 0;
    for (double t_a : {1.0e-9, 1.0037e-9, 1.2345e-9})
    {
        double const t_peak = t_a + 2e-9, t_b = t_a + 8e-9, h = 1.0;
        auto const w = triangle(0, dt, 2000, t_a, t_peak, t_b, h);
        auto const hits = discriminate(w, c, 1);
        ASSERT_EQ(hits.size(), 1u);
        double const lead = t_a + c.threshold / h * (t_peak - t_a);
        double const trail = t_b - c.threshold / h * (t_b - t_peak);
        EXPECT_NEAR(hits[0].leading_edge, lead, dt / 100);
        EXPECT_NEAR(hits[0].tot, trail - lead, dt / 100);
        EXPECT_FALSE(hits[0].truncated);
        EXPECT_NEAR(crossing_slope(w, c.threshold), h / (t_peak - t_a), 1e-3 * h / (t_peak - t_a));
    }
}

TEST(Discriminate, ZeroNoiseIsSeedIndependent)
{
    ComparatorConfig c;
    c.noise_rms = 0;
    auto const w = triangle(0, 10e-12, 2000, 1e-9, 3e-9, 9e-9, 1.0);
    auto const ref = discriminate(w, c, 1);
    for (std::uint64_t seed = 2; seed < 20; ++seed)
    {
        EXPECT_EQ(discriminate(w, c, seed), ref);
    }
}

TEST(Discriminate, JitterIsNoiseOverSlope)
{
    double const slope = 0.5 / 1e-9;
    ComparatorConfig c;
    c.threshold = 0.3;
    c.noise_rms = 5e-3;
    auto const w = triangle(0, 10e-12, 2000, 1e-9, 3e-9, 9e-9, 1.0);
    double m = 0, m2 = 0;
    int const n = 10000;
    for (int s = 0; s < n; ++s)
    {
        auto const hits = discriminate(w, c, 77, static_cast<std::uint64_t>(s));
        ASSERT_EQ(hits.size(), 1u);
        m += hits[0].leading_edge;
        m2 += hits[0].leading_edge * hits[0].leading_edge;
    }
    m /= n;
    double const sd = std::sqrt(m2 / n - m * m);
    EXPECT_NEAR(sd / (c.noise_rms / slope), 1.0, 0.05);
    EXPECT_NEAR(m, 1e-9 + 0.3 / slope, 5 * sd / std::sqrt(double(n)));
}

TEST(Discriminate, ShortPulsesDropped)
{
    ComparatorConfig c;
    c.noise_rms = 0;
    c.threshold = 0.5;
    c.min_pulse_width = 300e-12;
    // Above threshold for 200 ps only
    auto const w = triangle(0, 10e-12, 1000, 1e-9, 1.2e-9, 1.4e-9, 1.0);
    EXPECT_TRUE(discriminate(w, c, 1).empty());
    c.min_pulse_width = 100e-12;
    EXPECT_EQ(discriminate(w, c, 1).size(), 1u);
}

TEST(Discriminate, PulseRunningPastEndIsTruncated)
{
    ComparatorConfig c;
    c.noise_rms = 0;
    auto const w = triangle(0, 10e-12, 400, 1e-9, 2e-9, 10e-9, 1.0);
    auto const hits = discriminate(w, c, 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_TRUE(hits[0].truncated);
    EXPECT_NEAR(hits[0].tot, w.end_time() - hits[0].leading_edge, 1e-15);
}

TEST(Discriminate, StartingAboveThresholdHasNoLeadingEdge)
{
    ComparatorConfig c;
    c.noise_rms = 0;
    c.min_pulse_width = 0;
    AnalogWaveform w;
    w.dt = 10e-12;
    w.samples = {1, 1, 0, 0, 1, 1, 0, 0};
    auto const hits = discriminate(w, c, 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_GT(hits[0].leading_edge, 3 * w.dt);
}

TEST(Waveform, CsvDump)
{
    AnalogWaveform w;
    w.t0 = 1e-9;
    w.dt = 1e-9;
    w.samples = {0.5, -0.25};
    std::ostringstream os;
    write_waveform_csv(os, w);
    EXPECT_EQ(os.str(), "time_s,volts\n1e-09,0.5\n2e-09,-0.25\n");
}
