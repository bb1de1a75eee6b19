//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/cli/Scenario.hh
//! Scenario files: JSON with comments, one object per module section.
//---------------------------------------------------------------------------//
#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sipmtwin/analysis/Analysis.hh"
#include "sipmtwin/calibration/Calibration.hh"
#include "sipmtwin/core/Error.hh"
#include "sipmtwin/frontend/Frontend.hh"
#include "sipmtwin/impedance/Impedance.hh"
#include "sipmtwin/photodetector/Photodetector.hh"
#include "sipmtwin/tdc/Tdc.hh"
#include "sipmtwin/tofct/TofCt.hh"

namespace sipmtwin::cli
{
//---------------------------------------------------------------------------//
using Json = nlohmann::json;

enum class Experiment
{
    sptr,
    darkcount,
    calibrate,
    impedance,
    tofct,
    spectrum,
};

inline char const* to_cstring(Experiment e)
{
    switch (e)
    {
        case Experiment::sptr:
            return "sptr";
        case Experiment::darkcount:
            return "darkcount";
        case Experiment::calibrate:
            return "calibrate";
        case Experiment::impedance:
            return "impedance";
        case Experiment::tofct:
            return "tofct";
        case Experiment::spectrum:
            return "spectrum";
    }
    return "unknown";
}

inline Experiment experiment_from_string(std::string const& s)
{
    for (auto e : {Experiment::sptr,
                   Experiment::darkcount,
                   Experiment::calibrate,
                   Experiment::impedance,
                   Experiment::tofct,
                   Experiment::spectrum})
    {
        if (s == to_cstring(e))
        {
            return e;
        }
    }
    throw InvalidArgument("unknown experiment '" + s + "'");
}

//! Invalid scenario; the message starts with the offending field path
class ConfigError : public InvalidArgument
{
  public:
    ConfigError(std::string const& path, std::string const& what)
        : InvalidArgument(path + ": " + what), path_{path}
    {
    }

    std::string const& path() const { return path_; }

  private:
    std::string path_;
};

//---------------------------------------------------------------------------//
/*!
 * Reader over one JSON object.
 *
 * Every read records the value actually used (given or default) into the
 * effective config, and \c finish rejects keys nobody asked for.
 */
class Section
{
  public:
    Section(Json const& in, Json& effective, std::string path)
        : in_{in}, effective_{effective}, path_{std::move(path)}
    {
        if (!in_.is_null() && !in_.is_object())
        {
            throw ConfigError(path_, "expected an object");
        }
        if (!effective_.is_object())
        {
            effective_ = Json::object();
        }
    }

    std::string field(std::string const& key) const
    {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(std::string const& key) const
    {
        return in_.is_object() && in_.contains(key);
    }

    template<class T>
    void read(std::string const& key, T& value)
    {
        used_.insert(key);
        if (this->has(key))
        {
            try
            {
                in_.at(key).get_to(value);
            }
            catch (nlohmann::json::exception const& e)
            {
                throw ConfigError(this->field(key),
                                  std::string("wrong type (") + e.what() + ")");
            }
        }
        effective_[key] = value;
    }

    template<class T>
    void read(std::string const& key, std::optional<T>& value)
    {
        used_.insert(key);
        if (this->has(key) && !in_.at(key).is_null())
        {
            T v{};
            try
            {
                in_.at(key).get_to(v);
            }
            catch (nlohmann::json::exception const& e)
            {
                throw ConfigError(this->field(key),
                                  std::string("wrong type (") + e.what() + ")");
            }
            value = v;
        }
        if (value)
        {
            effective_[key] = *value;
        }
    }

    //! Nested object; missing keys read as an empty object
    Section sub(std::string const& key)
    {
        used_.insert(key);
        static Json const empty = Json::object();
        Json const& child = this->has(key) ? in_.at(key) : empty;
        return Section(child, effective_[key], this->field(key));
    }

    //! Run a module's own validate() and attribute failures to this section
    template<class F>
    void check(F&& validator) const
    {
        try
        {
            validator();
        }
        catch (InvalidArgument const& e)
        {
            throw ConfigError(path_, e.what());
        }
    }

    void require(bool cond, std::string const& key, std::string const& what) const
    {
        if (!cond)
        {
            throw ConfigError(this->field(key), what);
        }
    }

    void finish() const
    {
        if (!in_.is_object())
        {
            return;
        }
        for (auto const& [key, value] : in_.items())
        {
            if (!used_.count(key))
            {
                throw ConfigError(this->field(key), "unknown field");
            }
        }
    }

  private:
    Json const& in_;
    Json& effective_;
    std::string path_;
    std::set<std::string> used_;
};

//---------------------------------------------------------------------------//
// EXPERIMENT SETTINGS
//---------------------------------------------------------------------------//
struct SptrSettings
{
    std::uint64_t pulses{200000};
    double mean_photons{0.4};  //!< Incident photons per laser pulse
    double laser_fwhm{60e-12};  //!< [s]
    double laser_delay{5e-9};  //!< Photon arrival after sync [s]
    //! When set, the transit jitter is derived so the quadrature total of
    //! laser, transit and comparator jitter equals this value [s]
    std::optional<double> target_total_fwhm;
    double sample_period{10e-12};  //!< [s]
    double pretrigger{2e-9};  //!< Trace start before the sync [s]
    double lookback{300e-9};  //!< Earlier dark pulses still on the baseline [s]
    double record_length{80e-9};  //!< Trace end after the sync [s]
    std::string fwhm_method{"interpolated"};
    std::int64_t tot_tolerance_bins{2};
};

struct DarkcountSettings
{
    double duration{30};  //!< [s]
    //! Per-trial expected count of the scaled Poisson check
    double scaled_expected{1e5};
    std::uint64_t trials{100};
    double spectrum_duration{2e-3};  //!< Dark acquisition for the ToT spectrum [s]
    std::uint64_t max_waveform_events{4000};
    double sample_period{10e-12};
    double record_length{80e-9};  //!< Trace kept after the last event [s]
    std::vector<double> thresholds;  //!< Optional threshold scan [V]
};

struct EnergyChannelSettings
{
    double integrator_tau{200e-9};  //!< [s]
    double amplifier_gain{1e3};  //!< [V/A]
    double threshold{0.02};  //!< [V]
    double sample_period{1e-9};  //!< [s]
    double record_length{3e-6};  //!< [s]
};

struct CalibrationSettings
{
    std::optional<std::string> csv;  //!< Measured datasets; else simulate
    std::uint64_t events_per_source{100};
    std::vector<std::array<double, 2>> settings{{40.0, 0.02}};  //!< (bias, thr)
    double initial_d{1.0};  //!< [keV]
};

struct ImpedanceSettings
{
    std::optional<std::string> dut;  //!< Touchstone or CSV
    std::optional<std::string> open;
    std::optional<std::string> short_std;
    std::optional<std::string> load;
    // Synthetic sweep when no files are given
    std::optional<double> r_in;  //!< Defaults to the preamp input impedance
    double inductance{2.27e-9};  //!< Series lead inductance [H]
    double f_start{10e6};
    double f_stop{5e9};
    std::uint64_t points{500};
    std::array<double, 2> directivity{0.05, 0.02};  //!< (re, im)
    std::array<double, 2> source_match{0.1, -0.05};
    std::array<double, 2> tracking{0.9, 0.1};
    double limit{50};  //!< [Ohm]
};

struct TofctSettings
{
    std::uint64_t events{100000};
    double timing_fwhm{200e-12};  //!< Gaussian system response [s]
    double primary_acceptance{0.95};
    std::optional<double> window_hi;  //!< Explicit upper edge [s]
    std::string timing_mode{"gaussian"};  //!< or "chain"
    double sample_period{10e-12};
    double record_length{20e-9};
};

struct SpectrumSettings
{
    std::uint64_t events{5000};
    double energy_bin_width{1};  //!< [keV]
    //! (a, b, c, d) of a known calibration; else fitted from reference sources
    std::optional<std::array<double, 4>> model;
};

//---------------------------------------------------------------------------//
struct Scenario
{
    Experiment experiment{Experiment::sptr};
    std::uint64_t seed{1};
    std::string output_dir{"out"};

    SipmConfig sipm;
    PreampConfig preamp;
    ComparatorConfig comparator;
    TdcConfig tdc;
    SptrSettings sptr;
    DarkcountSettings darkcount;
    EnergyChannelSettings energy_channel;
    CalibrationSettings calibration;
    ImpedanceSettings impedance;
    XraySourceConfig xray_source;
    ScintillatorConfig scintillator;
    GeometryConfig geometry;
    TofctSettings tofct;
    SpectrumSettings spectrum;

    //! Energy bin edges came from the file rather than the default
    bool tdc_edges_explicit{false};

    //! Every setting actually used, defaults filled in
    Json effective;
};

//---------------------------------------------------------------------------//
// PARSING
//---------------------------------------------------------------------------//
namespace detail
{
inline void read_section(Section s, SipmConfig& c)
{
    s.read("active_area", c.active_area);
    s.read("breakdown_voltage", c.breakdown_voltage);
    s.read("max_overvoltage", c.max_overvoltage);
    s.read("bias_voltage", c.bias_voltage);
    s.read("terminal_capacitance", c.terminal_capacitance);
    s.read("dark_rate_density", c.dark_rate_density);
    s.read("pde", c.pde);
    s.read("single_cell_charge_gain", c.single_cell_charge_gain);
    s.read("pulse_rise_time", c.pulse_rise_time);
    s.read("pulse_decay_time", c.pulse_decay_time);
    s.read("intrinsic_transit_jitter_fwhm", c.intrinsic_transit_jitter_fwhm);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, PreampConfig& c)
{
    s.read("gm1", c.gm1);
    s.read("gm2", c.gm2);
    s.read("gmf", c.gmf);
    s.read("r_f", c.r_f);
    s.read("r_b1", c.r_b1);
    s.read("mirror_ratio_n", c.mirror_ratio_n);
    s.read("r_load", c.r_load);
    s.read("bandwidth_limit", c.bandwidth_limit);
    s.read("bypass_corner", c.bypass_corner);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, ComparatorConfig& c)
{
    s.read("threshold", c.threshold);
    s.read("noise_rms", c.noise_rms);
    s.read("min_pulse_width", c.min_pulse_width);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, TdcConfig& c)
{
    s.read("delta_t_window", c.delta_t_window);
    s.read("delta_t_lsb", c.delta_t_lsb);
    s.read("tot_bin_width", c.tot_bin_width);
    s.read("energy_bin_edges", c.energy_bin_edges);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, SptrSettings& c)
{
    s.read("pulses", c.pulses);
    s.read("mean_photons", c.mean_photons);
    s.read("laser_fwhm", c.laser_fwhm);
    s.read("laser_delay", c.laser_delay);
    s.read("target_total_fwhm", c.target_total_fwhm);
    s.read("sample_period", c.sample_period);
    s.read("pretrigger", c.pretrigger);
    s.read("lookback", c.lookback);
    s.read("record_length", c.record_length);
    s.read("fwhm_method", c.fwhm_method);
    s.read("tot_tolerance_bins", c.tot_tolerance_bins);
    s.finish();
    s.require(c.pulses > 0, "pulses", "must be positive");
    s.require(c.mean_photons > 0, "mean_photons", "must be positive");
    s.require(c.laser_fwhm > 0, "laser_fwhm", "must be positive");
    s.require(!c.target_total_fwhm || *c.target_total_fwhm > 0,
              "target_total_fwhm",
              "must be positive");
    s.require(c.sample_period > 0, "sample_period", "must be positive");
    s.require(c.pretrigger > 0, "pretrigger", "must be positive");
    s.require(c.lookback >= c.pretrigger, "lookback", "must be >= pretrigger");
    s.require(c.record_length > c.laser_delay,
              "record_length",
              "must extend past laser_delay");
    s.require(c.tot_tolerance_bins >= 0, "tot_tolerance_bins", "must be >= 0");
    s.check([&] { (void)fwhm_method_from_string(c.fwhm_method); });
}

inline void read_section(Section s, DarkcountSettings& c)
{
    s.read("duration", c.duration);
    s.read("scaled_expected", c.scaled_expected);
    s.read("trials", c.trials);
    s.read("spectrum_duration", c.spectrum_duration);
    s.read("max_waveform_events", c.max_waveform_events);
    s.read("sample_period", c.sample_period);
    s.read("record_length", c.record_length);
    s.read("thresholds", c.thresholds);
    s.finish();
    s.require(c.duration > 0, "duration", "must be positive");
    s.require(c.scaled_expected > 0, "scaled_expected", "must be positive");
    s.require(c.trials > 0, "trials", "must be positive");
    s.require(c.spectrum_duration > 0, "spectrum_duration", "must be positive");
    s.require(c.sample_period > 0, "sample_period", "must be positive");
    s.require(c.record_length > 0, "record_length", "must be positive");
    s.require(std::is_sorted(c.thresholds.begin(), c.thresholds.end()),
              "thresholds",
              "must be ascending");
}

inline void read_section(Section s, EnergyChannelSettings& c)
{
    s.read("integrator_tau", c.integrator_tau);
    s.read("amplifier_gain", c.amplifier_gain);
    s.read("threshold", c.threshold);
    s.read("sample_period", c.sample_period);
    s.read("record_length", c.record_length);
    s.finish();
    s.require(c.integrator_tau > 0, "integrator_tau", "must be positive");
    s.require(c.amplifier_gain > 0, "amplifier_gain", "must be positive");
    s.require(c.threshold > 0, "threshold", "must be positive");
    s.require(c.sample_period > 0, "sample_period", "must be positive");
    s.require(c.record_length > c.sample_period,
              "record_length",
              "must exceed sample_period");
}

inline void read_section(Section s, CalibrationSettings& c)
{
    s.read("csv", c.csv);
    s.read("events_per_source", c.events_per_source);
    s.read("settings", c.settings);
    s.read("initial_d", c.initial_d);
    s.finish();
    s.require(c.events_per_source > 0, "events_per_source", "must be positive");
    s.require(!c.settings.empty() || c.csv, "settings", "must not be empty");
}

inline void read_section(Section s, ImpedanceSettings& c)
{
    s.read("dut", c.dut);
    s.read("open", c.open);
    s.read("short", c.short_std);
    s.read("load", c.load);
    s.read("r_in", c.r_in);
    s.read("inductance", c.inductance);
    s.read("f_start", c.f_start);
    s.read("f_stop", c.f_stop);
    s.read("points", c.points);
    s.read("directivity", c.directivity);
    s.read("source_match", c.source_match);
    s.read("tracking", c.tracking);
    s.read("limit", c.limit);
    s.finish();
    bool const any_file = c.dut || c.open || c.short_std || c.load;
    bool const all_files = c.dut && c.open && c.short_std && c.load;
    s.require(!any_file || all_files,
              "dut",
              "file input needs all of dut, open, short and load");
    s.require(c.f_start > 0 && c.f_start < c.f_stop
                  && c.f_stop <= max_sweep_frequency,
              "f_stop",
              "need 0 < f_start < f_stop <= 5 GHz");
    s.require(c.points >= 2, "points", "must be >= 2");
    s.require(c.inductance >= 0, "inductance", "must be non-negative");
    s.require(!c.r_in || *c.r_in >= 0, "r_in", "must be non-negative");
    s.require(c.limit > 0, "limit", "must be positive");
}

inline void read_section(Section s, XraySourceConfig& c)
{
    s.read("kvp", c.kvp);
    s.read("pulse_fwhm", c.pulse_fwhm);
    s.read("rep_rate", c.rep_rate);
    s.read("mean_photons_per_pulse", c.mean_photons_per_pulse);
    s.read("e_min", c.e_min);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, ScintillatorConfig& c)
{
    std::string kind = c.kind == ScintillatorKind::mqw ? "MQW" : "LYSO";
    s.read("kind", kind);
    if (kind == "LYSO")
    {
        c = scintillator_preset(ScintillatorKind::lyso);
    }
    else if (kind == "MQW")
    {
        c = scintillator_preset(ScintillatorKind::mqw);
    }
    else
    {
        throw ConfigError(s.field("kind"), "expected LYSO or MQW");
    }
    s.read("decay_time", c.decay_time);
    s.read("rise_time", c.rise_time);
    s.read("light_yield", c.light_yield);
    s.read("dimensions", c.dimensions);
    s.read("collection_efficiency", c.collection_efficiency);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, GeometryConfig& c)
{
    s.read("source_detector_distance", c.source_detector_distance);
    s.read("extra_path_mean", c.extra_path_mean);
    s.read("extra_path_spread", c.extra_path_spread);
    s.read("scatter_fraction", c.scatter_fraction);
    s.read("compton_factor_min", c.compton_factor_min);
    s.read("compton_factor_max", c.compton_factor_max);
    s.finish();
    s.check([&] { c.validate(); });
}

inline void read_section(Section s, TofctSettings& c)
{
    s.read("events", c.events);
    s.read("timing_fwhm", c.timing_fwhm);
    s.read("primary_acceptance", c.primary_acceptance);
    s.read("window_hi", c.window_hi);
    s.read("timing_mode", c.timing_mode);
    s.read("sample_period", c.sample_period);
    s.read("record_length", c.record_length);
    s.finish();
    s.require(c.events > 0, "events", "must be positive");
    s.require(c.timing_fwhm >= 0, "timing_fwhm", "must be non-negative");
    s.require(c.primary_acceptance > 0 && c.primary_acceptance <= 1,
              "primary_acceptance",
              "must lie in (0, 1]");
    s.require(c.timing_mode == "gaussian" || c.timing_mode == "chain",
              "timing_mode",
              "expected gaussian or chain");
    s.require(c.sample_period > 0, "sample_period", "must be positive");
    s.require(c.record_length > 0, "record_length", "must be positive");
}

inline void read_section(Section s, SpectrumSettings& c)
{
    s.read("events", c.events);
    s.read("energy_bin_width", c.energy_bin_width);
    s.read("model", c.model);
    s.finish();
    s.require(c.events > 0, "events", "must be positive");
    s.require(c.energy_bin_width > 0, "energy_bin_width", "must be positive");
}
}  // namespace detail

/*!
 * Build a scenario from a parsed document.
 *
 * Missing sections and fields take their defaults. \p experiment wins over
 * the document's own "experiment" field only when the document has none; a
 * conflicting value is an error.
 */
inline Scenario parse_scenario(Json const& doc, std::optional<Experiment> experiment)
{
    if (!doc.is_object())
    {
        throw ConfigError("<root>", "scenario must be a JSON object");
    }
    Scenario sc;
    Section root(doc, sc.effective, "");

    std::optional<std::string> name;
    root.read("experiment", name);
    if (name)
    {
        try
        {
            sc.experiment = experiment_from_string(*name);
        }
        catch (InvalidArgument const& e)
        {
            throw ConfigError("experiment", e.what());
        }
        if (experiment && *experiment != sc.experiment)
        {
            throw ConfigError("experiment",
                              std::string("scenario is for '") + *name
                                  + "' but '" + to_cstring(*experiment)
                                  + "' was requested");
        }
    }
    else
    {
        validate(experiment.has_value(),
                 "no experiment given on the command line or in the scenario");
        sc.experiment = *experiment;
    }
    sc.effective["experiment"] = to_cstring(sc.experiment);
    root.read("seed", sc.seed);
    root.read("output_dir", sc.output_dir);
    // Where results land does not change them; keep it out of the hash
    sc.effective.erase("output_dir");

    detail::read_section(root.sub("sipm"), sc.sipm);
    detail::read_section(root.sub("preamp"), sc.preamp);
    detail::read_section(root.sub("comparator"), sc.comparator);
    detail::read_section(root.sub("tdc"), sc.tdc);
    sc.tdc_edges_explicit = doc.contains("tdc") && doc["tdc"].is_object()
                            && doc["tdc"].contains("energy_bin_edges");
    detail::read_section(root.sub("sptr"), sc.sptr);
    detail::read_section(root.sub("darkcount"), sc.darkcount);
    detail::read_section(root.sub("energy_channel"), sc.energy_channel);
    detail::read_section(root.sub("calibration"), sc.calibration);
    detail::read_section(root.sub("impedance"), sc.impedance);
    detail::read_section(root.sub("xray_source"), sc.xray_source);
    detail::read_section(root.sub("scintillator"), sc.scintillator);
    detail::read_section(root.sub("geometry"), sc.geometry);
    detail::read_section(root.sub("tofct"), sc.tofct);
    detail::read_section(root.sub("spectrum"), sc.spectrum);
    root.finish();
    return sc;
}

//! Parse JSON text; // and /* */ comments are allowed
inline Json parse_json_text(std::string const& text)
{
    try
    {
        return Json::parse(text, nullptr, true, true);
    }
    catch (nlohmann::json::parse_error const& e)
    {
        throw InvalidArgument(std::string("scenario is not valid JSON: ")
                              + e.what());
    }
}

inline Scenario load_scenario(std::string const& path,
                              std::optional<Experiment> experiment)
{
    std::ifstream in(path);
    validate(static_cast<bool>(in), "cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(parse_json_text(ss.str()), experiment);
}

//! FNV-1a 64 over the canonical dump of the effective configuration
inline std::uint64_t config_hash(Json const& effective)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : effective.dump())
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin::cli
