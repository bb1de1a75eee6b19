//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/tofct/TofCt.hh
//! Toy Monte Carlo of pulsed X-ray time-of-flight scatter rejection.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sipmtwin/core/Constants.hh"
#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/Random.hh"
#include "sipmtwin/photodetector/Photodetector.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
struct XraySourceConfig
{
    double kvp{120};  //!< Tube voltage, spectrum endpoint [kV]
    double pulse_fwhm{80e-12};  //!< [s]
    double rep_rate{1e6};  //!< [Hz]
    //! Stand-in for tube current: mean X-rays reaching the pixel per pulse
    double mean_photons_per_pulse{1};
    double e_min{10};  //!< Lower spectrum cutoff [keV]

    void validate() const
    {
        using sipmtwin::validate;
        validate(kvp > 0, "xray_source.kvp must be positive");
        validate(pulse_fwhm > 0, "xray_source.pulse_fwhm must be positive");
        validate(rep_rate > 0, "xray_source.rep_rate must be positive");
        validate(mean_photons_per_pulse >= 0,
                 "xray_source.mean_photons_per_pulse must be non-negative");
        validate(e_min > 0 && e_min < kvp,
                 "xray_source.e_min must lie in (0, kvp)");
    }
};

enum class ScintillatorKind
{
    lyso,
    mqw,
};

struct ScintillatorConfig
{
    ScintillatorKind kind{ScintillatorKind::lyso};
    double decay_time{33e-9};  //!< [s]
    double rise_time{70e-12};  //!< [s]
    double light_yield{30};  //!< [photons / keV]
    std::array<double, 3> dimensions{4, 4, 3};  //!< [mm]
    //! Fraction of emitted photons reaching the SiPM face
    double collection_efficiency{0.1};

    void validate() const
    {
        using sipmtwin::validate;
        validate(rise_time > 0 && decay_time > rise_time,
                 "scintillator needs decay_time > rise_time > 0");
        validate(light_yield >= 0, "scintillator.light_yield must be >= 0");
        validate(collection_efficiency >= 0 && collection_efficiency <= 1,
                 "scintillator.collection_efficiency must lie in [0, 1]");
    }
};

//! Typical parameters for the two scintillator families
inline ScintillatorConfig scintillator_preset(ScintillatorKind kind)
{
    ScintillatorConfig s;
    s.kind = kind;
    if (kind == ScintillatorKind::mqw)
    {
        s.decay_time = 1e-9;
        s.rise_time = 10e-12;
        s.light_yield = 10;
        s.dimensions = {4, 4, 0.43};
    }
    return s;
}

/*!
 * Source-to-detector geometry with a single-scatter approximation.
 *
 * Scattered photons travel an extra path drawn from a gamma distribution with
 * the given mean and standard deviation (a fixed offset when the spread is
 * zero) and lose energy by a factor drawn uniformly from the Compton proxy
 * range.
 */
struct GeometryConfig
{
    double source_detector_distance{1.0};  //!< [m]
    double extra_path_mean{0.10};  //!< [m]
    double extra_path_spread{0.05};  //!< [m]
    double scatter_fraction{0.3};
    double compton_factor_min{0.5};
    double compton_factor_max{0.95};

    void validate() const
    {
        using sipmtwin::validate;
        validate(source_detector_distance > 0,
                 "geometry.source_detector_distance must be positive");
        validate(extra_path_mean >= 0 && extra_path_spread >= 0,
                 "geometry extra path must be non-negative");
        validate(scatter_fraction >= 0 && scatter_fraction <= 1,
                 "geometry.scatter_fraction must lie in [0, 1]");
        validate(compton_factor_min > 0 && compton_factor_min <= compton_factor_max
                     && compton_factor_max <= 1,
                 "geometry Compton factor range must satisfy 0 < min <= max "
                 "<= 1");
    }
};

struct TofEvent
{
    double arrival_time{0};  //!< [s] relative to the source pulse
    double energy{0};  //!< [keV]
    bool scattered{false};
};

//! Event with the time the detector system reports for it
struct MeasuredEvent
{
    TofEvent event;
    double measured_time{0};  //!< [s]
};

//---------------------------------------------------------------------------//
// SOURCE
//---------------------------------------------------------------------------//
//! Unnormalized Kramers density (kvp - E) / E on [e_min, kvp]
inline double kramers_density(double energy, double kvp, double e_min)
{
    if (energy < e_min || energy > kvp)
    {
        return 0;
    }
    return (kvp - energy) / energy;
}

/*!
 * Bremsstrahlung energy from the Kramers form.
 *
 * Rejection sampling: propose from the log-uniform density 1/E on
 * [e_min, kvp] and accept with probability (kvp - E) / kvp.
 */
inline double sample_bremsstrahlung(XraySourceConfig const& cfg, Engine& rng)
{
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double const log_span = std::log(cfg.kvp / cfg.e_min);
    while (true)
    {
        double const e = cfg.e_min * std::exp(log_span * uni(rng));
        if (uni(rng) * cfg.kvp <= cfg.kvp - e)
        {
            return e;
        }
    }
}

inline double sample_bremsstrahlung(XraySourceConfig const& cfg,
                                    std::uint64_t seed,
                                    std::uint64_t stream = 0)
{
    auto rng = make_engine(seed, StreamTag::xray, stream);
    return sample_bremsstrahlung(cfg, rng);
}

//! Flight time over \p distance [s]
inline double flight_time(double distance)
{
    return distance / constants::c_light;
}

//---------------------------------------------------------------------------//
// TRANSPORT
//---------------------------------------------------------------------------//
/*!
 * One X-ray from pulse emission to the detector face.
 *
 * Arrival = pulse_time + path / c + gaussian source jitter; scattered photons
 * take the extra path and keep a Compton-proxy fraction of their energy.
 */
inline TofEvent simulate_event(GeometryConfig const& g,
                               XraySourceConfig const& src,
                               Engine& rng,
                               double pulse_time = 0)
{
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, fwhm_to_sigma(src.pulse_fwhm));

    TofEvent ev;
    ev.energy = sample_bremsstrahlung(src, rng);
    double path = g.source_detector_distance;
    ev.scattered = uni(rng) < g.scatter_fraction;
    if (ev.scattered)
    {
        double extra = g.extra_path_mean;
        if (g.extra_path_spread > 0 && g.extra_path_mean > 0)
        {
            double const k = std::pow(g.extra_path_mean / g.extra_path_spread, 2);
            std::gamma_distribution<double> gamma(k, g.extra_path_mean / k);
            extra = gamma(rng);
        }
        path += extra;
        double const factor
            = g.compton_factor_min
              + (g.compton_factor_max - g.compton_factor_min) * uni(rng);
        ev.energy *= factor;
    }
    ev.arrival_time = pulse_time + flight_time(path) + jitter(rng);
    return ev;
}

inline TofEvent simulate_event(GeometryConfig const& g,
                               XraySourceConfig const& src,
                               std::uint64_t seed,
                               std::uint64_t stream = 0)
{
    auto rng = make_engine(seed, StreamTag::xray, stream);
    return simulate_event(g, src, rng);
}

//---------------------------------------------------------------------------//
// SCINTILLATION
//---------------------------------------------------------------------------//
/*!
 * Optical photons reaching the SiPM for one absorbed X-ray.
 *
 * Count ~ Poisson(light_yield * E * collection_efficiency); each emission
 * delay is the sum of independent exponential rise and decay times, which
 * reproduces the bi-exponential pulse (exp(-t/decay) - exp(-t/rise)).
 */
inline std::vector<PhotonEvent> scintillate(TofEvent const& ev,
                                            ScintillatorConfig const& s,
                                            Engine& rng)
{
    validate(ev.energy > 0, "scintillation needs positive energy");
    std::vector<PhotonEvent> photons;
    double const mean = s.light_yield * ev.energy * s.collection_efficiency;
    if (!(mean > 0))
    {
        return photons;
    }
    std::poisson_distribution<long> count(mean);
    long const n = count(rng);
    photons.reserve(static_cast<std::size_t>(n));
    std::exponential_distribution<double> rise(1 / s.rise_time);
    std::exponential_distribution<double> decay(1 / s.decay_time);
    for (long i = 0; i < n; ++i)
    {
        photons.push_back({ev.arrival_time + rise(rng) + decay(rng),
                           PhotonOrigin::scintillation,
                           1});
    }
    std::sort(photons.begin(), photons.end(), [](auto const& a, auto const& b) {
        return a.time < b.time;
    });
    return photons;
}

//---------------------------------------------------------------------------//
// TIME WINDOW AND SPR
//---------------------------------------------------------------------------//
struct TimeWindow
{
    double lo{-std::numeric_limits<double>::infinity()};
    double hi{std::numeric_limits<double>::infinity()};

    bool contains(double t) const { return t >= lo && t <= hi; }
};

//! Events whose measured time lies in [lo, hi]
inline std::vector<MeasuredEvent> tof_filter(std::span<MeasuredEvent const> events,
                                             TimeWindow const& window)
{
    validate(window.lo < window.hi, "time window needs lo < hi");
    std::vector<MeasuredEvent> out;
    std::copy_if(events.begin(),
                 events.end(),
                 std::back_inserter(out),
                 [&](auto const& e) { return window.contains(e.measured_time); });
    return out;
}

struct SprCounts
{
    std::uint64_t primary{0};
    std::uint64_t scattered{0};
};

inline SprCounts count_scatter(std::span<MeasuredEvent const> events)
{
    SprCounts c;
    for (auto const& e : events)
    {
        (e.event.scattered ? c.scattered : c.primary) += 1;
    }
    return c;
}

//! Scattered-to-primary ratio
inline double spr(SprCounts const& c)
{
    validate<UndefinedRatio>(c.primary > 0, "SPR undefined without primaries");
    return static_cast<double>(c.scattered) / static_cast<double>(c.primary);
}

inline double spr(std::span<MeasuredEvent const> events)
{
    return spr(count_scatter(events));
}

//! Percent reduction (1 - after / before) * 100
inline double spr_reduction(double spr_before, double spr_after)
{
    validate<UndefinedRatio>(spr_before > 0,
                             "SPR reduction undefined when no scatter before "
                             "filtering");
    return (1 - spr_after / spr_before) * 100;
}

//---------------------------------------------------------------------------//
// MEASUREMENT
//---------------------------------------------------------------------------//
/*!
 * Simulate \p n events and attach a gaussian system timing response.
 *
 * Transport and timing draw from separate streams, so runs that differ only
 * in \p timing_fwhm see the same photons and the same unit normal draws
 * (common random numbers).
 */
inline std::vector<MeasuredEvent> measure_events(GeometryConfig const& g,
                                                 XraySourceConfig const& src,
                                                 double timing_fwhm,
                                                 std::size_t n,
                                                 std::uint64_t seed,
                                                 std::uint64_t trial = 0)
{
    validate(timing_fwhm >= 0, "timing FWHM must be non-negative");
    auto transport = make_engine(seed, StreamTag::xray, trial);
    auto timing = make_engine(seed, StreamTag::timing, trial);
    std::normal_distribution<double> unit(0.0, 1.0);
    double const sigma = fwhm_to_sigma(timing_fwhm);

    std::vector<MeasuredEvent> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        MeasuredEvent m;
        m.event = simulate_event(g, src, transport);
        m.measured_time = m.event.arrival_time + sigma * unit(timing);
        out.push_back(m);
    }
    return out;
}

/*!
 * Tightest upper window edge keeping at least \p acceptance of the primaries
 * (lower edge open).
 */
inline TimeWindow acceptance_window(std::span<MeasuredEvent const> events,
                                    double acceptance)
{
    validate(acceptance > 0 && acceptance <= 1,
             "primary acceptance must lie in (0, 1]");
    std::vector<double> t;
    for (auto const& e : events)
    {
        if (!e.event.scattered)
        {
            t.push_back(e.measured_time);
        }
    }
    validate<UndefinedRatio>(!t.empty(), "no primary events");
    std::sort(t.begin(), t.end());
    auto const k = static_cast<std::size_t>(
        std::ceil(acceptance * static_cast<double>(t.size()) - 1e-9));
    TimeWindow w;
    w.hi = t[std::max<std::size_t>(k, 1) - 1];
    return w;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
