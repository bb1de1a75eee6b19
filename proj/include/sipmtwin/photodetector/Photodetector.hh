//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/photodetector/Photodetector.hh
//! SPAD firing generation (dark, laser, scintillation) and avalanche current.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sipmtwin/core/Constants.hh"
#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/Random.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
/*!
 * Static SiPM parameters at one operating (bias) point.
 *
 * Defaults describe a 2 x 2 mm^2 device biased at 40 V. The single-cell gain
 * is expressed per volt of overvoltage, so the charge of one fired cell is
 * e * single_cell_charge_gain * (bias - breakdown). The dark rate applies to
 * the configured bias only; no rate-vs-bias curve is modeled.
 */
struct SipmConfig
{
    double active_area{4.0};  //!< [mm^2]
    double breakdown_voltage{32.5};  //!< [V]
    double max_overvoltage{16.0};  //!< [V]
    double bias_voltage{40.0};  //!< [V]
    double terminal_capacitance{160e-12};  //!< [F]
    double dark_rate_density{125e3};  //!< [counts/s/mm^2]
    double pde{0.5};  //!< Photon detection efficiency
    double single_cell_charge_gain{5e5};  //!< [electrons / V overvoltage]
    double pulse_rise_time{1e-9};  //!< [s]
    double pulse_decay_time{50e-9};  //!< [s]
    double intrinsic_transit_jitter_fwhm{100e-12};  //!< [s]

    double overvoltage() const { return bias_voltage - breakdown_voltage; }

    //! Total dark rate lambda [1/s]
    double dark_rate() const { return dark_rate_density * active_area; }

    //! Charge released by one fired cell [C]
    double cell_charge() const
    {
        return constants::e_charge * single_cell_charge_gain * overvoltage();
    }

    void validate() const
    {
        using sipmtwin::validate;
        validate(active_area > 0, "sipm.active_area must be positive");
        validate(bias_voltage >= breakdown_voltage,
                 "sipm.bias_voltage must be >= breakdown_voltage");
        validate(overvoltage() <= max_overvoltage,
                 "sipm.bias_voltage exceeds breakdown + max_overvoltage");
        validate(terminal_capacitance > 0,
                 "sipm.terminal_capacitance must be positive");
        validate(dark_rate_density >= 0,
                 "sipm.dark_rate_density must be non-negative");
        validate(pde >= 0 && pde <= 1, "sipm.pde must lie in [0, 1]");
        validate(single_cell_charge_gain > 0,
                 "sipm.single_cell_charge_gain must be positive");
        validate(pulse_rise_time > 0 && pulse_decay_time > 0
                     && intrinsic_transit_jitter_fwhm > 0,
                 "sipm pulse times must be positive");
        validate(pulse_rise_time < pulse_decay_time,
                 "sipm.pulse_rise_time must be shorter than decay time");
    }
};

//---------------------------------------------------------------------------//
enum class PhotonOrigin
{
    laser_pulse,
    dark_count,
    scintillation,
};

inline char const* to_cstring(PhotonOrigin o)
{
    switch (o)
    {
        case PhotonOrigin::laser_pulse:
            return "laser";
        case PhotonOrigin::dark_count:
            return "dark";
        case PhotonOrigin::scintillation:
            return "scintillation";
    }
    return "?";
}

//! A timestamped SPAD firing (or incident photon before detection)
struct PhotonEvent
{
    double time{0};  //!< [s]
    PhotonOrigin origin{PhotonOrigin::dark_count};
    int n_cells_fired{1};

    friend bool operator==(PhotonEvent const&, PhotonEvent const&) = default;
};

inline bool is_time_sorted(std::span<PhotonEvent const> events)
{
    return std::is_sorted(
        events.begin(), events.end(), [](auto const& a, auto const& b) {
            return a.time < b.time;
        });
}

//! Merge two time-sorted event lists into one time-sorted list
inline std::vector<PhotonEvent> merge_events(std::span<PhotonEvent const> a,
                                             std::span<PhotonEvent const> b)
{
    std::vector<PhotonEvent> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(),
               a.end(),
               b.begin(),
               b.end(),
               std::back_inserter(out),
               [](auto const& x, auto const& y) { return x.time < y.time; });
    return out;
}

//---------------------------------------------------------------------------//
// DARK COUNTS
//---------------------------------------------------------------------------//
/*!
 * Homogeneous Poisson dark events on [t_begin, t_end) drawn from \p rng.
 *
 * Exponential inter-arrival gaps, so the output is sorted by construction.
 */
inline std::vector<PhotonEvent> generate_dark_events(SipmConfig const& config,
                                                     double t_begin,
                                                     double t_end,
                                                     Engine& rng)
{
    validate(t_end > t_begin, "dark event interval must have positive length");
    std::vector<PhotonEvent> events;
    double const rate = config.dark_rate();
    if (!(rate > 0))
    {
        return events;
    }
    events.reserve(static_cast<std::size_t>(rate * (t_end - t_begin) * 1.05)
                   + 16);
    std::exponential_distribution<double> gap(rate);
    double t = t_begin + gap(rng);
    while (t < t_end)
    {
        events.push_back({t, PhotonOrigin::dark_count, 1});
        t += gap(rng);
    }
    return events;
}

//! Dark events on [0, duration) for one acquisition stream
inline std::vector<PhotonEvent> generate_dark_events(SipmConfig const& config,
                                                     double duration,
                                                     std::uint64_t seed,
                                                     std::uint64_t stream = 0)
{
    validate(duration > 0, "duration must be positive");
    auto rng = make_engine(seed, StreamTag::dark, stream);
    return generate_dark_events(config, 0.0, duration, rng);
}

//! Expected dark count lambda * t = rate density * area * duration
inline double expected_dark_count(SipmConfig const& config, double duration)
{
    return config.dark_rate_density * config.active_area * duration;
}

//---------------------------------------------------------------------------//
// DETECTION
//---------------------------------------------------------------------------//
//! Bernoulli(pde) thinning of incident photons, order preserved
inline std::vector<PhotonEvent> detect_photons(SipmConfig const& config,
                                               std::span<PhotonEvent const> incident,
                                               Engine& rng)
{
    std::vector<PhotonEvent> out;
    if (config.pde <= 0)
    {
        return out;
    }
    if (config.pde >= 1)
    {
        return {incident.begin(), incident.end()};
    }
    out.reserve(static_cast<std::size_t>(incident.size() * config.pde) + 8);
    std::bernoulli_distribution accept(config.pde);
    for (auto const& photon : incident)
    {
        if (accept(rng))
        {
            out.push_back(photon);
        }
    }
    return out;
}

inline std::vector<PhotonEvent> detect_photons(SipmConfig const& config,
                                               std::span<PhotonEvent const> incident,
                                               std::uint64_t seed,
                                               std::uint64_t stream = 0)
{
    auto rng = make_engine(seed, StreamTag::thinning, stream);
    return detect_photons(config, incident, rng);
}

//! Add the SiPM's intrinsic gaussian transit jitter and re-sort
inline void apply_transit_jitter(SipmConfig const& config,
                                 std::vector<PhotonEvent>& events,
                                 Engine& rng)
{
    std::normal_distribution<double> jitter(
        0.0, fwhm_to_sigma(config.intrinsic_transit_jitter_fwhm));
    for (auto& e : events)
    {
        e.time += jitter(rng);
    }
    std::stable_sort(events.begin(), events.end(), [](auto const& a, auto const& b) {
        return a.time < b.time;
    });
}

//---------------------------------------------------------------------------//
// AVALANCHE CURRENT
//---------------------------------------------------------------------------//
/*!
 * Difference-of-exponentials single-cell pulse shape, normalized to unit
 * peak: s(t) = (exp(-t/decay) - exp(-t/rise)) / norm for t >= 0.
 */
struct PulseShape
{
    double rise{1e-9};
    double decay{50e-9};

    //! Time of the unnormalized maximum
    double peak_time() const
    {
        return rise * decay / (decay - rise) * std::log(decay / rise);
    }

    //! Peak of the unnormalized difference of exponentials
    double norm() const
    {
        double const tp = peak_time();
        return std::exp(-tp / decay) - std::exp(-tp / rise);
    }

    //! Integral of the unit-peak shape [s]
    double area() const { return (decay - rise) / norm(); }

    double operator()(double t) const
    {
        if (t < 0)
        {
            return 0;
        }
        return (std::exp(-t / decay) - std::exp(-t / rise)) / norm();
    }
};

struct CurrentPulse
{
    double fire_time{0};  //!< [s]
    double peak_current{0};  //!< [A]
};

//! Summed avalanche current: pulses sharing one shape
struct CurrentPulseTrain
{
    std::vector<CurrentPulse> pulses;
    PulseShape shape;

    bool empty() const { return pulses.empty(); }

    //! Total charge of all pulses [C]
    double total_charge() const
    {
        double q = 0;
        for (auto const& p : pulses)
        {
            q += p.peak_current;
        }
        return q * shape.area();
    }

    //! Instantaneous current, brute-force sum [A]
    double current(double t) const
    {
        double i = 0;
        for (auto const& p : pulses)
        {
            i += p.peak_current * shape(t - p.fire_time);
        }
        return i;
    }

    CurrentPulseTrain scaled(double factor) const
    {
        CurrentPulseTrain out = *this;
        for (auto& p : out.pulses)
        {
            p.peak_current *= factor;
        }
        return out;
    }
};

/*!
 * One current pulse per firing; peak proportional to cells fired times the
 * single-cell charge, which is itself linear in the overvoltage.
 */
inline CurrentPulseTrain avalanche_current(SipmConfig const& config,
                                           std::span<PhotonEvent const> fires)
{
    // At exactly breakdown the avalanche carries no charge
    validate(config.bias_voltage > config.breakdown_voltage,
             "SiPM must be biased above breakdown");
    validate(config.pulse_rise_time > 0
                 && config.pulse_rise_time < config.pulse_decay_time,
             "pulse rise time must be positive and shorter than decay");

    CurrentPulseTrain train;
    train.shape = PulseShape{config.pulse_rise_time, config.pulse_decay_time};
    train.pulses.reserve(fires.size());
    double const unit_peak = config.cell_charge() / train.shape.area();
    for (auto const& fire : fires)
    {
        validate(fire.n_cells_fired >= 1, "n_cells_fired must be >= 1");
        train.pulses.push_back({fire.time, fire.n_cells_fired * unit_peak});
    }
    std::stable_sort(train.pulses.begin(),
                     train.pulses.end(),
                     [](auto const& a, auto const& b) {
                         return a.fire_time < b.fire_time;
                     });
    return train;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
