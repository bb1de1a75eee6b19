//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/tdc/Tdc.hh
//! Delay-line TDC model: Delta T and ToT quantization, energy binning, and
//! histogram accumulation.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/Format.hh"
#include "sipmtwin/frontend/Frontend.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
inline constexpr int num_energy_bins = 8;
using EnergyEdges = std::array<double, num_energy_bins - 1>;

//! Seven equally spaced edges splitting [lo, hi] into eight bins
inline EnergyEdges uniform_energy_edges(double lo, double hi)
{
    EnergyEdges edges{};
    for (int k = 0; k < num_energy_bins - 1; ++k)
    {
        edges[k] = lo + (hi - lo) * (k + 1) / num_energy_bins;
    }
    return edges;
}

struct TdcConfig
{
    double delta_t_window{20e-9};  //!< [s]
    double delta_t_lsb{10e-12};  //!< [s]
    double tot_bin_width{1e-9};  //!< [s]
    EnergyEdges energy_bin_edges{uniform_energy_edges(0, 64e-9)};  //!< [s]

    //! Number of Delta T codes inside the window
    std::int64_t delta_t_codes() const
    {
        return static_cast<std::int64_t>(
            std::ceil(delta_t_window / delta_t_lsb - 1e-9));
    }

    void validate() const
    {
        using sipmtwin::validate;
        validate(delta_t_lsb > 0 && delta_t_window > 0,
                 "tdc window and lsb must be positive");
        validate(delta_t_lsb < delta_t_window,
                 "tdc.delta_t_lsb must be smaller than delta_t_window");
        validate(tot_bin_width > 0, "tdc.tot_bin_width must be positive");
        validate(std::adjacent_find(energy_bin_edges.begin(),
                                    energy_bin_edges.end(),
                                    std::greater_equal<>{})
                     == energy_bin_edges.end(),
                 "tdc.energy_bin_edges must be strictly ascending");
    }
};

//! One digitized hit
struct TdcRecord
{
    std::int64_t delta_t_code{0};
    std::int64_t tot_code{0};
    int energy_bin{0};

    friend bool operator==(TdcRecord const&, TdcRecord const&) = default;
};

//---------------------------------------------------------------------------//
// HISTOGRAM
//---------------------------------------------------------------------------//
/*!
 * Counts over ascending bin edges; counts.size() == bin_edges.size() - 1.
 *
 * Histograms filled from TDC codes are uniform with edges k * width and grow
 * on demand, so merging shards of different lengths stays exact.
 */
struct Histogram
{
    std::vector<double> bin_edges;
    std::vector<std::uint64_t> counts;

    static Histogram uniform(std::size_t bins, double low, double width)
    {
        Histogram h;
        h.bin_edges.resize(bins + 1);
        for (std::size_t k = 0; k <= bins; ++k)
        {
            h.bin_edges[k] = low + static_cast<double>(k) * width;
        }
        h.counts.assign(bins, 0);
        return h;
    }

    std::size_t size() const { return counts.size(); }
    bool empty() const { return counts.empty(); }
    double bin_low(std::size_t i) const { return bin_edges[i]; }
    double bin_high(std::size_t i) const { return bin_edges[i + 1]; }
    double bin_center(std::size_t i) const
    {
        return 0.5 * (bin_edges[i] + bin_edges[i + 1]);
    }
    double bin_width(std::size_t i) const
    {
        return bin_edges[i + 1] - bin_edges[i];
    }

    std::uint64_t total() const
    {
        std::uint64_t n = 0;
        for (auto c : counts)
        {
            n += c;
        }
        return n;
    }

    std::uint64_t max_count() const
    {
        return counts.empty() ? 0
                              : *std::max_element(counts.begin(), counts.end());
    }

    //! Extend a uniform histogram with empty bins up to \p bins
    void grow_uniform(std::size_t bins)
    {
        validate(bin_edges.size() >= 2, "cannot grow a histogram without bins");
        if (bins <= counts.size())
        {
            return;
        }
        double const low = bin_edges.front();
        double const width = bin_edges[1] - bin_edges[0];
        for (std::size_t k = bin_edges.size(); k <= bins; ++k)
        {
            bin_edges.push_back(low + static_cast<double>(k) * width);
        }
        counts.resize(bins, 0);
    }

    //! Bin containing \p value (half-open [low, high)), if any
    std::optional<std::size_t> find_bin(double value) const
    {
        if (bin_edges.size() < 2 || value < bin_edges.front()
            || !(value < bin_edges.back()))
        {
            return std::nullopt;
        }
        auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), value);
        return static_cast<std::size_t>(it - bin_edges.begin()) - 1;
    }

    bool fill(double value, std::uint64_t weight = 1)
    {
        if (auto bin = find_bin(value))
        {
            counts[*bin] += weight;
            return true;
        }
        return false;
    }

    /*!
     * Add another histogram's counts.
     *
     * Edges must agree on the common prefix; the shorter one is extended, so
     * merging is commutative and associative.
     */
    Histogram& merge(Histogram const& other)
    {
        if (other.bin_edges.empty())
        {
            return *this;
        }
        if (bin_edges.empty())
        {
            *this = other;
            return *this;
        }
        std::size_t const common
            = std::min(bin_edges.size(), other.bin_edges.size());
        validate(std::equal(bin_edges.begin(),
                            bin_edges.begin() + common,
                            other.bin_edges.begin()),
                 "cannot merge histograms with different bin edges");
        if (other.bin_edges.size() > bin_edges.size())
        {
            bin_edges = other.bin_edges;
            counts.resize(other.counts.size(), 0);
        }
        for (std::size_t i = 0; i < other.counts.size(); ++i)
        {
            counts[i] += other.counts[i];
        }
        return *this;
    }

    friend bool operator==(Histogram const&, Histogram const&) = default;
};

//---------------------------------------------------------------------------//
// QUANTIZATION
//---------------------------------------------------------------------------//
/*!
 * Floor-quantize stop - start into LSB codes.
 *
 * Returns nullopt outside [0, window). The code is corrected against
 * floating-point rounding so that the quantization error
 * (stop - start) - code * lsb is always in [0, lsb).
 */
inline std::optional<std::int64_t>
measure_delta_t(double start, double stop, TdcConfig const& cfg)
{
    double const dt = stop - start;
    if (!(dt >= 0) || !(dt < cfg.delta_t_window))
    {
        return std::nullopt;
    }
    auto code = static_cast<std::int64_t>(std::floor(dt / cfg.delta_t_lsb));
    while (code > 0 && static_cast<double>(code) * cfg.delta_t_lsb > dt)
    {
        --code;
    }
    while (static_cast<double>(code + 1) * cfg.delta_t_lsb <= dt)
    {
        ++code;
    }
    return std::min(code, cfg.delta_t_codes() - 1);
}

//! Floor-quantize a ToT into tot_bin_width codes
inline std::int64_t quantize_tot(double tot, TdcConfig const& cfg)
{
    validate(tot >= 0, "ToT must be non-negative");
    auto code = static_cast<std::int64_t>(std::floor(tot / cfg.tot_bin_width));
    while (code > 0 && static_cast<double>(code) * cfg.tot_bin_width > tot)
    {
        --code;
    }
    while (static_cast<double>(code + 1) * cfg.tot_bin_width <= tot)
    {
        ++code;
    }
    return code;
}

/*!
 * Energy bin 0..7: the number of edges at or below \p tot.
 *
 * A ToT exactly equal to an edge belongs to the upper bin.
 */
inline int classify_energy(double tot, TdcConfig const& cfg)
{
    auto const& e = cfg.energy_bin_edges;
    return static_cast<int>(std::upper_bound(e.begin(), e.end(), tot)
                            - e.begin());
}

/*!
 * Digitize a comparator hit against a sync reference.
 *
 * Delta T = hit - sync (sync is the start, the ASIC output the stop). The
 * energy bin is assigned from the quantized ToT, as the FPGA sees it.
 */
inline std::optional<TdcRecord>
digitize(DigitalHit const& hit, double sync_time, TdcConfig const& cfg)
{
    auto code = measure_delta_t(sync_time, hit.leading_edge, cfg);
    if (!code)
    {
        return std::nullopt;
    }
    TdcRecord rec;
    rec.delta_t_code = *code;
    rec.tot_code = quantize_tot(hit.tot, cfg);
    rec.energy_bin = classify_energy(
        static_cast<double>(rec.tot_code) * cfg.tot_bin_width, cfg);
    return rec;
}

//---------------------------------------------------------------------------//
// ACCUMULATION
//---------------------------------------------------------------------------//
//! Histogram set produced by one acquisition
struct TdcHistograms
{
    Histogram delta_t;
    std::array<Histogram, num_energy_bins> delta_t_by_energy;
    Histogram tot;
    std::uint64_t out_of_window{0};

    friend bool operator==(TdcHistograms const&, TdcHistograms const&)
        = default;
};

/*!
 * Streaming accumulator. Shards built from disjoint record streams merge
 * exactly and in any order.
 */
class TdcAccumulator
{
  public:
    explicit TdcAccumulator(TdcConfig const& cfg) : cfg_{cfg}
    {
        auto const codes = static_cast<std::size_t>(cfg.delta_t_codes());
        hists_.delta_t = Histogram::uniform(codes, 0.0, cfg.delta_t_lsb);
        for (auto& h : hists_.delta_t_by_energy)
        {
            h = hists_.delta_t;
        }
        hists_.tot = Histogram::uniform(1, 0.0, cfg.tot_bin_width);
    }

    void add(TdcRecord const& rec)
    {
        validate(rec.delta_t_code >= 0
                     && rec.delta_t_code < cfg_.delta_t_codes(),
                 "Delta T code outside the TDC window");
        validate(rec.energy_bin >= 0 && rec.energy_bin < num_energy_bins,
                 "energy bin outside 0..7");
        validate(rec.tot_code >= 0, "negative ToT code");
        auto const dt = static_cast<std::size_t>(rec.delta_t_code);
        hists_.delta_t.counts[dt] += 1;
        hists_.delta_t_by_energy[static_cast<std::size_t>(rec.energy_bin)]
            .counts[dt]
            += 1;
        auto const tot = static_cast<std::size_t>(rec.tot_code);
        hists_.tot.grow_uniform(tot + 1);
        hists_.tot.counts[tot] += 1;
    }

    //! Record a hit that fell outside the Delta T window
    void add_out_of_window(std::uint64_t n = 1) { hists_.out_of_window += n; }

    //! Digitize and add; returns whether the hit was inside the window
    bool add(DigitalHit const& hit, double sync_time)
    {
        if (auto rec = digitize(hit, sync_time, cfg_))
        {
            this->add(*rec);
            return true;
        }
        this->add_out_of_window();
        return false;
    }

    TdcAccumulator& merge(TdcAccumulator const& other)
    {
        hists_.delta_t.merge(other.hists_.delta_t);
        for (int k = 0; k < num_energy_bins; ++k)
        {
            hists_.delta_t_by_energy[k].merge(other.hists_.delta_t_by_energy[k]);
        }
        hists_.tot.merge(other.hists_.tot);
        hists_.out_of_window += other.hists_.out_of_window;
        return *this;
    }

    TdcHistograms const& histograms() const { return hists_; }
    TdcConfig const& config() const { return cfg_; }

  private:
    TdcConfig cfg_;
    TdcHistograms hists_;
};

//! Histogram a stream of records
inline TdcHistograms accumulate(std::span<TdcRecord const> records,
                                TdcConfig const& cfg)
{
    TdcAccumulator acc(cfg);
    for (auto const& rec : records)
    {
        acc.add(rec);
    }
    return acc.histograms();
}

//---------------------------------------------------------------------------//
// CSV EXPORT
//---------------------------------------------------------------------------//
//! "bin_low,bin_high,count" with shortest round-trip edge formatting
inline void write_histogram_csv(std::ostream& os, Histogram const& h)
{
    std::string out = "bin_low,bin_high,count\n";
    for (std::size_t i = 0; i < h.size(); ++i)
    {
        append_number(out, h.bin_low(i));
        out += ',';
        append_number(out, h.bin_high(i));
        out += ',';
        out += std::to_string(h.counts[i]);
        out += '\n';
    }
    os << out;
}

inline Histogram read_histogram_csv(std::istream& is)
{
    Histogram h;
    std::string line;
    validate(static_cast<bool>(std::getline(is, line)),
             "histogram CSV is empty");
    validate(line.rfind("bin_low,bin_high,count", 0) == 0,
             "histogram CSV must start with header bin_low,bin_high,count");
    std::size_t row = 1;
    while (std::getline(is, line))
    {
        ++row;
        if (line.empty() || line == "\r")
        {
            continue;
        }
        std::istringstream ss(line);
        std::string lo, hi, cnt;
        validate(std::getline(ss, lo, ',') && std::getline(ss, hi, ',')
                     && std::getline(ss, cnt),
                 "malformed histogram CSV row " + std::to_string(row));
        double const low = std::stod(lo);
        double const high = std::stod(hi);
        if (h.bin_edges.empty())
        {
            h.bin_edges.push_back(low);
        }
        validate(low == h.bin_edges.back() && high > low,
                 "histogram CSV bins must be contiguous and ascending (row "
                     + std::to_string(row) + ")");
        h.bin_edges.push_back(high);
        h.counts.push_back(std::stoull(cnt));
    }
    return h;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
