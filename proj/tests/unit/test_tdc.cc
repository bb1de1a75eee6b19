//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tests/unit/test_tdc.cc
//---------------------------------------------------------------------------//
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "sipmtwin/tdc/Tdc.hh"

using namespace sipmtwin;

namespace
{
//! Count edges e with e <= tot by linear scan
int classify_by_scan(double tot, EnergyEdges const& edges)
{
    int bin = 0;
    for (double e : edges)
    {
        if (tot >= e)
        {
            ++bin;
        }
    }
    return bin;
}

std::vector<TdcRecord> random_records(std::size_t n, std::uint64_t seed,
                                      TdcConfig const& cfg)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> dt(0, cfg.delta_t_codes() - 1);
    std::uniform_int_distribution<std::int64_t> tot(0, 70);
    std::uniform_int_distribution<int> bin(0, num_energy_bins - 1);
    std::vector<TdcRecord> recs(n);
    for (auto& r : recs)
    {
        r = {dt(rng), tot(rng), bin(rng)};
    }
    return recs;
}
}  // namespace

//---------------------------------------------------------------------------//
TEST(MeasureDeltaT, Examples)
{
    TdcConfig const cfg;
    EXPECT_EQ(measure_delta_t(3e-9, 3e-9, cfg), 0);
    EXPECT_EQ(measure_delta_t(0, 5.004e-9, cfg), 500);
    EXPECT_EQ(measure_delta_t(0, 25e-9, cfg), std::nullopt);
    EXPECT_EQ(measure_delta_t(1e-9, 0, cfg), std::nullopt);
    EXPECT_EQ(measure_delta_t(0, 20e-9, cfg), std::nullopt);
    EXPECT_EQ(measure_delta_t(0, std::nextafter(20e-9, 0.0), cfg), 1999);
}

TEST(MeasureDeltaT, QuantizationErrorInHalfOpenLsb)
{
    TdcConfig const cfg;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> start(-1e-6, 1e-6);
    std::uniform_real_distribution<double> gap(0, cfg.delta_t_window);
    for (int i = 0; i < 1'000'000; ++i)
    {
        double const a = start(rng);
        double const b = a + gap(rng);
        auto const code = measure_delta_t(a, b, cfg);
        if (!code)
        {
            // Only reachable when rounding pushes b - a to the window edge
            ASSERT_GE(b - a, cfg.delta_t_window);
            continue;
        }
        double const err = (b - a) - static_cast<double>(*code) * cfg.delta_t_lsb;
        ASSERT_GE(err, 0.0);
        ASSERT_LT(err, cfg.delta_t_lsb);
    }
}

TEST(MeasureDeltaT, ExactGridPointsLandOnTheirCode)
{
    TdcConfig const cfg;
    for (std::int64_t k = 0; k < cfg.delta_t_codes(); ++k)
    {
        double const dt = static_cast<double>(k) * cfg.delta_t_lsb;
        ASSERT_EQ(measure_delta_t(0, dt, cfg), k);
    }
}

TEST(QuantizeTot, FloorsAndRejectsNegative)
{
    TdcConfig const cfg;
    EXPECT_EQ(quantize_tot(0, cfg), 0);
    EXPECT_EQ(quantize_tot(12.999e-9, cfg), 12);
    EXPECT_EQ(quantize_tot(13e-9, cfg), 13);
    EXPECT_THROW(quantize_tot(-1e-12, cfg), InvalidArgument);
}

//---------------------------------------------------------------------------//
TEST(ClassifyEnergy, ExtremesAndTies)
{
    TdcConfig cfg;
    cfg.energy_bin_edges = {10, 20, 30, 40, 50, 60, 70};
    EXPECT_EQ(classify_energy(-1, cfg), 0);
    EXPECT_EQ(classify_energy(9.99, cfg), 0);
    EXPECT_EQ(classify_energy(1e9, cfg), 7);
    for (int k = 0; k < 7; ++k)
    {
        EXPECT_EQ(classify_energy(cfg.energy_bin_edges[k], cfg), k + 1);
    }
}

TEST(ClassifyEnergy, AgreesWithLinearScanAndIsMonotone)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 100);
    for (int trial = 0; trial < 200; ++trial)
    {
        TdcConfig cfg;
        std::vector<double> e(7);
        for (auto& v : e)
        {
            v = u(rng);
        }
        std::sort(e.begin(), e.end());
        std::copy(e.begin(), e.end(), cfg.energy_bin_edges.begin());
        // Every edge, its neighbors in ulps, and random points
        std::vector<double> probes;
        for (double v : e)
        {
            probes.push_back(v);
            probes.push_back(std::nextafter(v, -1.0));
            probes.push_back(std::nextafter(v, 1e3));
        }
        for (int i = 0; i < 50; ++i)
        {
            probes.push_back(u(rng) * 1.2 - 10);
        }
        std::sort(probes.begin(), probes.end());
        int prev = 0;
        for (double p : probes)
        {
            int const bin = classify_energy(p, cfg);
            ASSERT_EQ(bin, classify_by_scan(p, cfg.energy_bin_edges));
            ASSERT_GE(bin, prev);
            prev = bin;
        }
    }
}

TEST(ClassifyEnergy, UniformEdges)
{
    auto const e = uniform_energy_edges(0, 64e-9);
    EXPECT_DOUBLE_EQ(e.front(), 8e-9);
    EXPECT_DOUBLE_EQ(e.back(), 56e-9);
}

TEST(TdcConfig, Validation)
{
    TdcConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.delta_t_codes(), 2000);
    cfg.energy_bin_edges[3] = cfg.energy_bin_edges[2];
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = TdcConfig{};
    cfg.delta_t_lsb = cfg.delta_t_window;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Digitize, UsesSyncAsStartAndQuantizedTot)
{
    TdcConfig cfg;
    cfg.energy_bin_edges = uniform_energy_edges(0, 16e-9);  // 2 ns wide bins
    DigitalHit hit{105.0123e-9, 3.9e-9, false};
    auto const rec = digitize(hit, 100e-9, cfg);
    ASSERT_TRUE(rec);
    EXPECT_EQ(rec->delta_t_code, 501);
    EXPECT_EQ(rec->tot_code, 3);
    EXPECT_EQ(rec->energy_bin, 1);  // quantized 3 ns, not raw 3.9 ns
    EXPECT_FALSE(digitize(hit, 110e-9, cfg));
}

//---------------------------------------------------------------------------//
TEST(Accumulate, EmptyStream)
{
    TdcConfig const cfg;
    auto const h = accumulate({}, cfg);
    EXPECT_EQ(h.delta_t.total(), 0u);
    EXPECT_EQ(h.delta_t.size(), 2000u);
    for (auto const& b : h.delta_t_by_energy)
    {
        EXPECT_EQ(b.total(), 0u);
    }
    EXPECT_EQ(h.tot.total(), 0u);
}

TEST(Accumulate, SingleEnergyBin)
{
    TdcConfig const cfg;
    std::vector<TdcRecord> recs(1000, TdcRecord{42, 5, 3});
    auto const h = accumulate(recs, cfg);
    for (int k = 0; k < num_energy_bins; ++k)
    {
        EXPECT_EQ(h.delta_t_by_energy[k].total(), k == 3 ? 1000u : 0u);
    }
    EXPECT_EQ(h.delta_t.counts[42], 1000u);
    EXPECT_EQ(h.tot.counts.at(5), 1000u);
}

TEST(Accumulate, PartitionIdentityAgainstRecount)
{
    TdcConfig const cfg;
    auto const recs = random_records(50000, 3, cfg);
    auto const h = accumulate(recs, cfg);

    std::vector<std::uint64_t> global(2000, 0);
    std::vector<std::vector<std::uint64_t>> per(8, global);
    std::vector<std::uint64_t> tot(71, 0);
    for (auto const& r : recs)
    {
        ++global[r.delta_t_code];
        ++per[r.energy_bin][r.delta_t_code];
        ++tot[r.tot_code];
    }
    EXPECT_EQ(h.delta_t.counts, global);
    for (int k = 0; k < num_energy_bins; ++k)
    {
        EXPECT_EQ(h.delta_t_by_energy[k].counts, per[k]);
    }
    for (std::size_t i = 0; i < global.size(); ++i)
    {
        std::uint64_t sum = 0;
        for (auto const& b : h.delta_t_by_energy)
        {
            sum += b.counts[i];
        }
        ASSERT_EQ(sum, h.delta_t.counts[i]);
    }
    EXPECT_EQ(h.tot.counts, tot);
    EXPECT_EQ(h.delta_t.total(), recs.size());
}

TEST(Accumulate, OrderIndependentAndShardMergeExact)
{
    TdcConfig const cfg;
    auto recs = random_records(20000, 4, cfg);
    auto const ref = accumulate(recs, cfg);

    std::mt19937_64 rng(5);
    std::shuffle(recs.begin(), recs.end(), rng);
    EXPECT_EQ(accumulate(recs, cfg), ref);

    // Three uneven shards merged in two different orders
    std::span<TdcRecord const> all(recs);
    TdcAccumulator a(cfg), b(cfg), c(cfg);
    for (auto const& r : all.subspan(0, 100)) a.add(r);
    for (auto const& r : all.subspan(100, 15000)) b.add(r);
    for (auto const& r : all.subspan(15100)) c.add(r);
    TdcAccumulator ab = a;
    ab.merge(b).merge(c);
    TdcAccumulator cb = c;
    cb.merge(b).merge(a);
    EXPECT_EQ(ab.histograms(), ref);
    EXPECT_EQ(cb.histograms(), ref);
}

TEST(Accumulate, OutOfWindowIsCountedNotBinned)
{
    TdcConfig const cfg;
    TdcAccumulator acc(cfg);
    EXPECT_TRUE(acc.add(DigitalHit{5e-9, 2e-9, false}, 0.0));
    EXPECT_FALSE(acc.add(DigitalHit{25e-9, 2e-9, false}, 0.0));
    EXPECT_FALSE(acc.add(DigitalHit{-1e-9, 2e-9, false}, 0.0));
    EXPECT_EQ(acc.histograms().out_of_window, 2u);
    EXPECT_EQ(acc.histograms().delta_t.total(), 1u);
}

TEST(Accumulate, RejectsInvalidRecords)
{
    TdcAccumulator acc(TdcConfig{});
    EXPECT_THROW(acc.add(TdcRecord{2000, 0, 0}), InvalidArgument);
    EXPECT_THROW(acc.add(TdcRecord{0, 0, 8}), InvalidArgument);
    EXPECT_THROW(acc.add(TdcRecord{0, -1, 0}), InvalidArgument);
}

//---------------------------------------------------------------------------//
TEST(Histogram, FindBinIsHalfOpen)
{
    auto const h = Histogram::uniform(4, 0.0, 1.0);
    EXPECT_EQ(h.find_bin(0.0), 0u);
    EXPECT_EQ(h.find_bin(1.0), 1u);
    EXPECT_EQ(h.find_bin(3.999), 3u);
    EXPECT_EQ(h.find_bin(4.0), std::nullopt);
    EXPECT_EQ(h.find_bin(-0.1), std::nullopt);
}

TEST(Histogram, MergeRejectsMismatchedEdges)
{
    auto a = Histogram::uniform(4, 0.0, 1.0);
    auto const b = Histogram::uniform(4, 0.0, 2.0);
    EXPECT_THROW(a.merge(b), InvalidArgument);
}

TEST(Histogram, CsvRoundTripIsBitExact)
{
    TdcConfig const cfg;
    auto const h = accumulate(random_records(5000, 6, cfg), cfg).delta_t;
    std::stringstream ss;
    write_histogram_csv(ss, h);
    EXPECT_EQ(ss.str().substr(0, 23), "bin_low,bin_high,count\n");
    EXPECT_EQ(read_histogram_csv(ss), h);
}

TEST(Histogram, CsvReaderRejectsGaps)
{
    std::istringstream bad("bin_low,bin_high,count\n0,1,3\n2,3,4\n");
    EXPECT_THROW(read_histogram_csv(bad), InvalidArgument);
    std::istringstream no_header("0,1,3\n");
    EXPECT_THROW(read_histogram_csv(no_header), InvalidArgument);
}
