//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/frontend/Frontend.hh
//! Small-signal current-mode preamplifier, energy channel and comparator.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <vector>

#include "sipmtwin/core/Constants.hh"
#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/Random.hh"
#include "sipmtwin/photodetector/Photodetector.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
/*!
 * Preamplifier small-signal parameters.
 *
 * The input stage is a flipped voltage follower whose input transistor is
 * transconductance-boosted by a regulated-cascode loop (gmf, r_f). The output
 * current mirror has size ratio N into the load r_load. All internal poles
 * are lumped into \c bandwidth_limit; \c bypass_corner is the high-pass
 * formed by the coupling capacitor against the comparator bias diode.
 *
 * The chip's transistor values are unpublished: defaults are plausible
 * calibration knobs, not measurements.
 */
struct PreampConfig
{
    double gm1{10e-3};  //!< [S]
    double gm2{10e-3};  //!< [S]
    double gmf{10e-3};  //!< [S]
    double r_f{1e3};  //!< [Ohm], 0 disables the boost loop
    double r_b1{10e3};  //!< [Ohm] small-signal resistance of the bias source
    double mirror_ratio_n{8};
    double r_load{10e3};  //!< [Ohm]
    double bandwidth_limit{1e9};  //!< [Hz]
    double bypass_corner{1.6e6};  //!< [Hz]

    void validate() const
    {
        using sipmtwin::validate;
        validate(gm1 > 0 && gm2 > 0 && gmf > 0,
                 "preamp transconductances must be positive");
        validate(r_f >= 0, "preamp.r_f must be non-negative");
        validate(r_b1 > 0 && r_load > 0,
                 "preamp.r_b1 and preamp.r_load must be positive");
        validate(mirror_ratio_n >= 1, "preamp.mirror_ratio_n must be >= 1");
        validate(bandwidth_limit > 0 && bypass_corner > 0,
                 "preamp corner frequencies must be positive");
        validate(bypass_corner < bandwidth_limit,
                 "preamp.bypass_corner must lie below bandwidth_limit");
    }
};

struct ComparatorConfig
{
    double threshold{0.3};  //!< [V] above the restored baseline
    double noise_rms{5e-3};  //!< [V] input referred
    double min_pulse_width{300e-12};  //!< [s] digital stage floor

    void validate() const
    {
        using sipmtwin::validate;
        validate(threshold > 0, "comparator.threshold must be positive");
        validate(noise_rms >= 0, "comparator.noise_rms must be non-negative");
        validate(min_pulse_width >= 0,
                 "comparator.min_pulse_width must be non-negative");
    }
};

//! Comparator output: leading edge and time over threshold
struct DigitalHit
{
    double leading_edge{0};  //!< [s]
    double tot{0};  //!< [s]
    bool truncated{false};  //!< Still above threshold at waveform end

    friend bool operator==(DigitalHit const&, DigitalHit const&) = default;
};

//! Uniformly sampled voltage trace
struct AnalogWaveform
{
    double t0{0};  //!< Time of sample 0 [s]
    double dt{10e-12};  //!< Sample period [s]
    std::vector<double> samples;  //!< [V]

    std::size_t size() const { return samples.size(); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
    double end_time() const { return time(samples.empty() ? 0 : size() - 1); }
};

//---------------------------------------------------------------------------//
// SMALL-SIGNAL RELATIONS
//---------------------------------------------------------------------------//
//! R_in = 1 / (gm1 gm2 R_B1 (1 + gmf R_f)); no negative-resistance term
inline double input_impedance(PreampConfig const& cfg)
{
    return 1.0 / (cfg.gm1 * cfg.gm2 * cfg.r_b1 * (1.0 + cfg.gmf * cfg.r_f));
}

//! DC transimpedance v_out / i_in = N R_L
inline double transimpedance_gain(PreampConfig const& cfg)
{
    return cfg.mirror_ratio_n * cfg.r_load;
}

//! Single RC pole 1 / (2 pi R C)
inline double pole_frequency(double resistance, double capacitance)
{
    return 1.0 / (2 * constants::pi * resistance * capacitance);
}

//! Pole formed by the SiPM capacitance against the preamp input
inline double input_pole_frequency(PreampConfig const& cfg, double c_sipm)
{
    validate(c_sipm > 0, "SiPM capacitance must be positive");
    return pole_frequency(input_impedance(cfg), c_sipm);
}

//---------------------------------------------------------------------------//
namespace detail
{
//---------------------------------------------------------------------------//
/*!
 * Sample gain * i(t) on the grid t0 + n dt exactly and pass each sample
 * through \p stage, storing what it returns.
 *
 * Each pulse is a sum of two decaying exponentials, so the whole train
 * reduces to two accumulators that decay geometrically per sample plus the
 * exact contribution of pulses that fire inside each sample interval.
 * Filters applied through \p stage run in the same pass, which lets their
 * recursions overlap instead of walking the trace once per filter.
 */
template<class Stage>
std::vector<double> sample_current(CurrentPulseTrain const& train,
                                   double t0,
                                   double dt,
                                   std::size_t n,
                                   double gain,
                                   Stage stage)
{
    std::vector<double> out(n, 0.0);
    if (train.empty() || n == 0)
    {
        return out;
    }
    double const tau_d = train.shape.decay;
    double const tau_r = train.shape.rise;
    double const step_d = std::exp(-dt / tau_d);
    double const step_r = std::exp(-dt / tau_r);
    double const scale = gain / train.shape.norm();

    auto const& pulses = train.pulses;
    std::size_t next = 0;
    double acc_d = 0;
    double acc_r = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        double const t = t0 + static_cast<double>(i) * dt;
        acc_d *= step_d;
        acc_r *= step_r;
        for (; next < pulses.size() && pulses[next].fire_time <= t; ++next)
        {
            double const age = t - pulses[next].fire_time;
            acc_d += pulses[next].peak_current * std::exp(-age / tau_d);
            acc_r += pulses[next].peak_current * std::exp(-age / tau_r);
        }
        out[i] = stage(scale * (acc_d - acc_r));
    }
    return out;
}

inline std::vector<double> sample_current(CurrentPulseTrain const& train,
                                          double t0,
                                          double dt,
                                          std::size_t n,
                                          double gain)
{
    return sample_current(train, t0, dt, n, gain, [](double x) { return x; });
}

//! Streaming first-order low-pass y[n] = a y[n-1] + (1 - a) x[n]
class LowPass
{
  public:
    LowPass(double dt, double tau) : a_{std::exp(-dt / tau)} {}

    double operator()(double x)
    {
        y_ = a_ * y_ + (1 - a_) * x;
        return y_;
    }

  private:
    double a_;
    double y_{0};
};

//! First-order low-pass y[n] = a y[n-1] + (1 - a) x[n], a = exp(-dt / tau)
inline void low_pass_inplace(std::vector<double>& x, double dt, double tau)
{
    double const a = std::exp(-dt / tau);
    double y = 0;
    for (double& v : x)
    {
        y = a * y + (1 - a) * v;
        v = y;
    }
}

//! First-order high-pass as the input minus its low-passed copy
inline void high_pass_inplace(std::vector<double>& x, double dt, double tau)
{
    double const a = std::exp(-dt / tau);
    double lp = 0;
    for (double& v : x)
    {
        lp = a * lp + (1 - a) * v;
        v -= lp;
    }
}

inline std::size_t sample_count(double span, double dt)
{
    validate(span > 0, "waveform span must be positive");
    validate(dt > 0, "sample period must be positive");
    return static_cast<std::size_t>(std::floor(span / dt + 1e-9)) + 1;
}

//---------------------------------------------------------------------------//
}  // namespace detail

//---------------------------------------------------------------------------//
// SHAPING
//---------------------------------------------------------------------------//
/*!
 * Preamplifier output for a current train.
 *
 * current * N R_L, then a single-pole low-pass at min(input pole, bandwidth
 * limit), then a single-pole high-pass at the bypass corner. The high-pass
 * blocks DC so the baseline recovers after every pulse.
 */
inline AnalogWaveform shape_pulse(CurrentPulseTrain const& train,
                                  PreampConfig const& cfg,
                                  double sample_period,
                                  double span,
                                  double t0 = 0.0,
                                  double c_sipm = 160e-12)
{
    validate(sample_period * 10 * cfg.bandwidth_limit <= 1.0 + 1e-9,
             "sample period undersamples the preamp bandwidth (need "
             "sample_period <= 1/(10 bandwidth_limit))");
    std::size_t const n = detail::sample_count(span, sample_period);

    AnalogWaveform wave;
    wave.t0 = t0;
    wave.dt = sample_period;
    double const lp_corner
        = std::min(input_pole_frequency(cfg, c_sipm), cfg.bandwidth_limit);
    // High-pass = input minus its low-passed copy
    auto filter = [band = detail::LowPass(sample_period,
                                          1 / (2 * constants::pi * lp_corner)),
                   baseline = detail::LowPass(
                       sample_period,
                       1 / (2 * constants::pi * cfg.bypass_corner))](
                      double x) mutable {
        double const y = band(x);
        return y - baseline(y);
    };
    wave.samples = detail::sample_current(
        train, t0, sample_period, n, transimpedance_gain(cfg), filter);
    return wave;
}

//---------------------------------------------------------------------------//
/*!
 * Energy channel: amplifier followed by a leaky integrator.
 *
 * The integrator has unit DC gain and time constant \p integrator_tau, so for
 * pulses much shorter than tau the peak is proportional to the pulse charge
 * (approximately amplifier_gain * Q / tau).
 */
inline AnalogWaveform energy_channel_shape(CurrentPulseTrain const& train,
                                           double integrator_tau,
                                           double sample_period,
                                           double span,
                                           double t0 = 0.0,
                                           double amplifier_gain = 1.0)
{
    validate(integrator_tau > train.shape.rise,
             "integrator time constant must exceed the pulse rise time");
    std::size_t const n = detail::sample_count(span, sample_period);

    AnalogWaveform wave;
    wave.t0 = t0;
    wave.dt = sample_period;
    wave.samples = detail::sample_current(train,
                                          t0,
                                          sample_period,
                                          n,
                                          amplifier_gain,
                                          detail::LowPass(sample_period,
                                                          integrator_tau));
    return wave;
}

//---------------------------------------------------------------------------//
// DISCRIMINATION
//---------------------------------------------------------------------------//
/*!
 * Leading-edge comparator.
 *
 * Crossings are located by linear interpolation between samples. Each edge
 * gets gaussian timing jitter with sigma = noise_rms / |slope| at the
 * crossing. A waveform that starts above threshold has no leading edge until
 * it drops below again. A pulse still above threshold at the end of the
 * trace is reported with its ToT measured to the last sample and flagged
 * truncated. Hits shorter than \c min_pulse_width are dropped.
 */
inline std::vector<DigitalHit> discriminate(AnalogWaveform const& wave,
                                            ComparatorConfig const& cfg,
                                            Engine& rng)
{
    std::vector<DigitalHit> hits;
    auto const& s = wave.samples;
    if (s.size() < 2)
    {
        return hits;
    }
    double const thr = cfg.threshold;
    std::normal_distribution<double> unit(0.0, 1.0);
    auto jitter = [&](double slope) {
        return cfg.noise_rms > 0 ? cfg.noise_rms / std::abs(slope) * unit(rng)
                                 : 0.0;
    };

    bool above = s[0] >= thr;
    bool armed = false;
    double lead = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
    {
        double const v0 = s[i - 1];
        double const v1 = s[i];
        if (!above && v1 >= thr)
        {
            double const slope = (v1 - v0) / wave.dt;
            lead = wave.time(i - 1) + (thr - v0) / slope + jitter(slope);
            above = true;
            armed = true;
        }
        else if (above && v1 < thr)
        {
            double const slope = (v1 - v0) / wave.dt;
            double const trail = wave.time(i - 1) + (thr - v0) / slope
                                 + jitter(slope);
            if (armed)
            {
                double const tot = trail - lead;
                if (tot > 0 && tot >= cfg.min_pulse_width)
                {
                    hits.push_back({lead, tot, false});
                }
            }
            above = false;
            armed = false;
        }
    }
    if (armed)
    {
        double const tot = wave.end_time() - lead;
        if (tot > 0 && tot >= cfg.min_pulse_width)
        {
            hits.push_back({lead, tot, true});
        }
    }
    return hits;
}

inline std::vector<DigitalHit> discriminate(AnalogWaveform const& wave,
                                            ComparatorConfig const& cfg,
                                            std::uint64_t seed,
                                            std::uint64_t stream = 0)
{
    auto rng = make_engine(seed, StreamTag::comparator, stream);
    return discriminate(wave, cfg, rng);
}

//! Slope [V/s] at the first upward threshold crossing
inline double crossing_slope(AnalogWaveform const& wave, double threshold)
{
    auto const& s = wave.samples;
    for (std::size_t i = 1; i < s.size(); ++i)
    {
        if (s[i - 1] < threshold && s[i] >= threshold)
        {
            return (s[i] - s[i - 1]) / wave.dt;
        }
    }
    throw NotFound("waveform never crosses the threshold");
}

//! Debug dump: "time_s,volts" per sample
inline void write_waveform_csv(std::ostream& os, AnalogWaveform const& wave)
{
    os << "time_s,volts\n";
    char buf[64];
    for (std::size_t i = 0; i < wave.size(); ++i)
    {
        auto r = std::to_chars(buf, buf + sizeof(buf), wave.time(i));
        *r.ptr++ = ',';
        r = std::to_chars(r.ptr, buf + sizeof(buf), wave.samples[i]);
        os.write(buf, r.ptr - buf);
        os.put('\n');
    }
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
