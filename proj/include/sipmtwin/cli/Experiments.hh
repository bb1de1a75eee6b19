//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/cli/Experiments.hh
//! End-to-end experiments behind the command-line subcommands.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "Scenario.hh"

#ifndef SIPMTWIN_VERSION
#    define SIPMTWIN_VERSION "unknown"
#endif

namespace sipmtwin::cli
{
//---------------------------------------------------------------------------//
//! Files produced by one run, written on request
class Artifacts
{
  public:
    explicit Artifacts(std::filesystem::path dir) : dir_{std::move(dir)} {}

    std::filesystem::path const& dir() const { return dir_; }

    void write(std::string const& name, std::string const& content) const
    {
        std::filesystem::create_directories(dir_);
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        validate(static_cast<bool>(out),
                 "cannot write '" + (dir_ / name).string() + "'");
        out << content;
    }

    void write_histogram(std::string const& name, Histogram const& h) const
    {
        std::ostringstream os;
        write_histogram_csv(os, h);
        this->write(name, os.str());
    }

    //! Extra "key value" lines for the run manifest
    void note(std::string key, std::string value)
    {
        notes_.emplace_back(std::move(key), std::move(value));
    }

    std::vector<std::pair<std::string, std::string>> const& notes() const
    {
        return notes_;
    }

  private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> notes_;
};

namespace detail
{
//---------------------------------------------------------------------------//
inline constexpr double ps = 1e12;
inline constexpr double ns = 1e9;

//! Count one ToT code in a histogram with edges k * width from zero
inline void add_code(Histogram& h, std::int64_t code)
{
    auto const bin = static_cast<std::size_t>(code);
    h.grow_uniform(bin + 1);
    h.counts[bin] += 1;
}

inline Json optional_number(double v)
{
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

//! Peak slope of a noiseless single-cell pulse at the comparator threshold
inline double single_cell_slope(Scenario const& sc, SipmConfig const& sipm)
{
    std::vector<PhotonEvent> fire{{1e-9, PhotonOrigin::laser_pulse, 1}};
    auto const train = avalanche_current(sipm, fire);
    auto const wave = shape_pulse(train,
                                  sc.preamp,
                                  sc.sptr.sample_period,
                                  sc.sptr.record_length,
                                  0.0,
                                  sipm.terminal_capacitance);
    return crossing_slope(wave, sc.comparator.threshold);
}

//! Comparator contribution to the timing spread, as a FWHM
inline double electronics_fwhm(Scenario const& sc, SipmConfig const& sipm)
{
    return sigma_to_fwhm(sc.comparator.noise_rms
                         / single_cell_slope(sc, sipm));
}

//---------------------------------------------------------------------------//
/*!
 * Energy-channel ToT [s] of one absorbed X-ray, or nullopt without a
 * complete pulse above \p threshold.
 */
inline std::optional<double> energy_channel_tot(Scenario const& sc,
                                                SipmConfig const& sipm,
                                                double energy_kev,
                                                double threshold,
                                                Engine& rng)
{
    TofEvent ev;
    ev.energy = energy_kev;
    auto const photons = scintillate(ev, sc.scintillator, rng);
    auto const fired = detect_photons(sipm, photons, rng);
    if (fired.empty())
    {
        return std::nullopt;
    }
    auto const& ec = sc.energy_channel;
    auto const wave = energy_channel_shape(avalanche_current(sipm, fired),
                                           ec.integrator_tau,
                                           ec.sample_period,
                                           ec.record_length,
                                           0.0,
                                           ec.amplifier_gain);
    ComparatorConfig cmp = sc.comparator;
    cmp.threshold = threshold;
    auto const hits = discriminate(wave, cmp, rng);
    if (hits.empty() || hits.front().truncated)
    {
        return std::nullopt;
    }
    return hits.front().tot;
}

//! Simulated calibration dataset for one operating point
inline CalibrationDataset simulate_calibration(Scenario const& sc,
                                               OperatingPoint op,
                                               std::uint64_t setting_index,
                                               std::uint64_t* rejected = nullptr)
{
    SipmConfig sipm = sc.sipm;
    sipm.bias_voltage = op.bias_v;
    validate(sipm.bias_voltage > sipm.breakdown_voltage
                 && sipm.overvoltage() <= sipm.max_overvoltage,
             "calibration bias outside the SiPM operating range");

    CalibrationDataset ds;
    ds.setting = op;
    std::uint64_t const n = sc.calibration.events_per_source;
    std::uint64_t lost = 0;
    for (std::size_t s = 0; s < reference_sources.size(); ++s)
    {
        auto const& src = reference_sources[s];
        for (std::uint64_t i = 0; i < n; ++i)
        {
            auto rng = make_engine(sc.seed,
                                   StreamTag::calibration,
                                   (setting_index * reference_sources.size() + s)
                                           * n
                                       + i);
            auto tot = energy_channel_tot(
                sc, sipm, src.energy_kev, op.threshold_v, rng);
            if (!tot)
            {
                ++lost;
                continue;
            }
            ds.points.push_back(
                {std::string(src.label), src.energy_kev, *tot * ns});
        }
    }
    if (rejected)
    {
        *rejected = lost;
    }
    return ds;
}

inline Json model_json(CalibrationModel const& m, std::size_t n_points)
{
    Json j;
    j["setting"] = {{"bias_v", 0.0}, {"threshold_v", 0.0}};
    j["a"] = m.a;
    j["b"] = m.b;
    j["c"] = m.c;
    j["d"] = m.d;
    j["final_S"] = m.fit.final_s;
    j["initial_S"] = m.fit.initial_s;
    j["iterations"] = m.fit.iterations;
    j["converged"] = m.fit.converged;
    j["std_errors"] = m.fit.std_errors;
    j["n_points"] = n_points;
    return j;
}

inline void append_dataset_csv(std::string& out, CalibrationDataset const& ds)
{
    for (auto const& p : ds.points)
    {
        out += p.source;
        out += ',';
        append_number(out, p.energy_kev);
        out += ',';
        append_number(out, p.tot_ns);
        out += ',';
        append_number(out, ds.setting.bias_v);
        out += ',';
        append_number(out, ds.setting.threshold_v);
        out += '\n';
    }
}

inline CalibrationModel fit_dataset(CalibrationDataset const& ds, double d0)
{
    validate(ds.size() >= 4,
             "too few calibration events produced a ToT; lower the energy "
             "channel threshold or raise events_per_source");
    return fit(ds, initial_guess(ds, d0));
}

inline ReflectionSweep read_sweep(std::string const& path)
{
    std::ifstream in(path);
    validate(static_cast<bool>(in), "cannot open sweep file '" + path + "'");
    auto const ext = std::filesystem::path(path).extension().string();
    return ext == ".csv" ? read_reflection_csv(in) : read_touchstone(in);
}

//! Uniform histogram with \p width bins covering [min, max] of \p values
inline Histogram histogram_of(std::vector<double> const& values, double width)
{
    if (values.empty())
    {
        return Histogram::uniform(1, 0.0, width);
    }
    auto const [lo, hi] = std::minmax_element(values.begin(), values.end());
    double const low = std::floor(*lo / width) * width;
    auto const bins = static_cast<std::size_t>(std::floor((*hi - low) / width))
                      + 1;
    auto h = Histogram::uniform(bins, low, width);
    for (double v : values)
    {
        if (!h.fill(v))
        {
            h.counts.back() += 1;  // rounding at the top edge
        }
    }
    return h;
}

//---------------------------------------------------------------------------//
}  // namespace detail

//---------------------------------------------------------------------------//
// SPTR
//---------------------------------------------------------------------------//
/*!
 * Laser single-photon timing through the full chain.
 *
 * Each laser pulse has its own random streams, so changing one knob (gain,
 * threshold, noise) keeps every other draw fixed. Events are selected by the
 * TDC energy bin placed on the single-photon ToT peak, as in the dark
 * calibration procedure.
 */
inline Json run_sptr(Scenario const& sc, Artifacts& out)
{
    auto const& cfg = sc.sptr;
    SipmConfig sipm = sc.sipm;

    double const elec_fwhm = detail::electronics_fwhm(sc, sipm);
    if (cfg.target_total_fwhm)
    {
        double const rest = std::pow(*cfg.target_total_fwhm, 2)
                            - std::pow(cfg.laser_fwhm, 2)
                            - std::pow(elec_fwhm, 2);
        validate(rest > 0,
                 "target_total_fwhm is below the laser and electronics "
                 "jitter alone");
        sipm.intrinsic_transit_jitter_fwhm = std::sqrt(rest);
    }

    std::normal_distribution<double> laser(cfg.laser_delay,
                                           fwhm_to_sigma(cfg.laser_fwhm));
    std::poisson_distribution<int> incident_count(cfg.mean_photons);

    std::vector<DigitalHit> hits;
    std::uint64_t empty_pulses = 0;
    for (std::uint64_t i = 0; i < cfg.pulses; ++i)
    {
        auto laser_rng = make_engine(sc.seed, StreamTag::laser, i);
        std::vector<PhotonEvent> incident(
            static_cast<std::size_t>(incident_count(laser_rng)));
        std::vector<PhotonEvent> fired;
        if (!incident.empty())
        {
            for (auto& p : incident)
            {
                p = {laser(laser_rng), PhotonOrigin::laser_pulse, 1};
            }
            std::sort(incident.begin(),
                      incident.end(),
                      [](auto const& a, auto const& b) { return a.time < b.time; });
            auto thin_rng = make_engine(sc.seed, StreamTag::thinning, i);
            auto transit_rng = make_engine(sc.seed, StreamTag::transit, i);
            fired = detect_photons(sipm, incident, thin_rng);
            apply_transit_jitter(sipm, fired, transit_rng);
        }
        auto dark_rng = make_engine(sc.seed, StreamTag::dark, i);
        auto const dark = generate_dark_events(
            sipm, -cfg.lookback, cfg.record_length, dark_rng);
        fired = merge_events(fired, dark);
        if (fired.empty())
        {
            ++empty_pulses;
            continue;
        }

        // Start at the earliest pulse so the filters see it from rest
        double const t0 = std::min(-cfg.pretrigger,
                                   fired.front().time - cfg.sample_period);
        auto const wave = shape_pulse(avalanche_current(sipm, fired),
                                      sc.preamp,
                                      cfg.sample_period,
                                      cfg.record_length - t0,
                                      t0,
                                      sipm.terminal_capacitance);
        auto const found = discriminate(wave, sc.comparator, sc.seed, i);
        auto first = std::find_if(found.begin(), found.end(), [](auto const& h) {
            return h.leading_edge >= 0;
        });
        if (first != found.end())
        {
            hits.push_back(*first);
        }
    }

    // Pass 1: ToT spectrum locates the single-photon peak
    TdcAccumulator all(sc.tdc);
    for (auto const& h : hits)
    {
        all.add(h, 0.0);
    }
    auto const& tot_hist = all.histograms().tot;
    double const spt = single_photon_tot(tot_hist);
    double const w = sc.tdc.tot_bin_width;
    auto const k = static_cast<std::int64_t>(std::floor(spt / w));
    std::int64_t const lo_code = std::max<std::int64_t>(
        k - cfg.tot_tolerance_bins, 0);
    std::int64_t const hi_code = k + cfg.tot_tolerance_bins + 1;

    // Pass 2: energy bin 1 holds exactly the single-photon ToT codes
    TdcConfig sel = sc.tdc;
    sel.energy_bin_edges[0] = static_cast<double>(lo_code) * w;
    for (std::size_t j = 1; j < sel.energy_bin_edges.size(); ++j)
    {
        sel.energy_bin_edges[j]
            = static_cast<double>(hi_code + 8 * static_cast<std::int64_t>(j - 1))
              * w;
    }
    TdcAccumulator selected(sel);
    for (auto const& h : hits)
    {
        selected.add(h, 0.0);
    }
    auto const& hists = selected.histograms();
    auto const& dt_hist = hists.delta_t_by_energy[1];
    auto const method = fwhm_method_from_string(cfg.fwhm_method);
    auto const res = fwhm(dt_hist, method);

    out.write_histogram("delta_t_single_photon.csv", dt_hist);
    out.write_histogram("delta_t_all.csv", hists.delta_t);
    out.write_histogram("tot.csv", tot_hist);

    double const transit = sipm.intrinsic_transit_jitter_fwhm;
    Json j;
    j["fwhm_ps"] = res.fwhm * detail::ps;
    j["peak_center_ps"] = res.peak_center * detail::ps;
    j["n_events"] = res.n_events;
    j["method"] = to_cstring(res.method);
    j["pulses"] = cfg.pulses;
    j["empty_pulses"] = empty_pulses;
    j["hits_in_window"] = hists.delta_t.total();
    j["out_of_window"] = hists.out_of_window;
    j["single_photon_tot_ns"] = spt * detail::ns;
    j["selected_tot_codes"] = {lo_code, hi_code - 1};
    j["jitter_budget"] = {
        {"laser_fwhm_ps", cfg.laser_fwhm * detail::ps},
        {"transit_fwhm_ps", transit * detail::ps},
        {"electronics_fwhm_ps", elec_fwhm * detail::ps},
        {"quadrature_total_ps",
         std::sqrt(cfg.laser_fwhm * cfg.laser_fwhm + transit * transit
                   + elec_fwhm * elec_fwhm)
             * detail::ps},
    };
    return j;
}

//---------------------------------------------------------------------------//
// DARK COUNTS
//---------------------------------------------------------------------------//
namespace detail
{
//! Dark events grouped into traces; each group shares one waveform
struct DarkTraces
{
    std::vector<std::vector<PhotonEvent>> groups;
    std::uint64_t events{0};
};

inline DarkTraces group_dark_events(Scenario const& sc)
{
    auto const& cfg = sc.darkcount;
    auto events = generate_dark_events(sc.sipm, cfg.spectrum_duration, sc.seed);
    if (events.size() > cfg.max_waveform_events)
    {
        events.resize(cfg.max_waveform_events);
    }
    DarkTraces traces;
    traces.events = events.size();
    for (auto const& e : events)
    {
        if (traces.groups.empty()
            || e.time - traces.groups.back().back().time > cfg.record_length)
        {
            traces.groups.emplace_back();
        }
        traces.groups.back().push_back(e);
    }
    return traces;
}

//! Dark ToT spectrum at \p threshold; comparator streams fixed per trace
inline Histogram dark_tot_spectrum(Scenario const& sc,
                                   DarkTraces const& traces,
                                   double threshold)
{
    auto const& cfg = sc.darkcount;
    ComparatorConfig cmp = sc.comparator;
    cmp.threshold = threshold;
    auto h = Histogram::uniform(1, 0.0, sc.tdc.tot_bin_width);
    for (std::size_t g = 0; g < traces.groups.size(); ++g)
    {
        auto const& group = traces.groups[g];
        double const t0 = group.front().time - 20 * cfg.sample_period;
        double const span = group.back().time + cfg.record_length - t0;
        auto const wave = shape_pulse(avalanche_current(sc.sipm, group),
                                      sc.preamp,
                                      cfg.sample_period,
                                      span,
                                      t0,
                                      sc.sipm.terminal_capacitance);
        for (auto const& hit : discriminate(wave, cmp, sc.seed, g))
        {
            if (!hit.truncated)
            {
                add_code(h, quantize_tot(hit.tot, sc.tdc));
            }
        }
    }
    return h;
}
}  // namespace detail

/*!
 * Dark-count expectation, a scaled Poisson check over independent trials,
 * and the dark ToT spectrum that calibrates the single-photon ToT.
 */
inline Json run_darkcount(Scenario const& sc, Artifacts& out)
{
    auto const& cfg = sc.darkcount;
    Json j;

    double const expected = expected_dark_count(sc.sipm, cfg.duration);
    double const rounded = std::round(expected);
    if (rounded == expected && expected < 9e15)
    {
        j["expected_count"] = static_cast<std::uint64_t>(rounded);
    }
    else
    {
        j["expected_count"] = expected;
    }
    j["duration_s"] = cfg.duration;
    j["dark_rate_hz"] = sc.sipm.dark_rate();
    out.note("expected_count", j["expected_count"].dump());

    if (sc.sipm.dark_rate() > 0)
    {
        double const scaled_duration = cfg.scaled_expected / sc.sipm.dark_rate();
        std::vector<std::uint64_t> counts;
        std::vector<double> z;
        std::uint64_t within = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t)
        {
            auto rng = make_engine(sc.seed, StreamTag::trial, t);
            auto const n = generate_dark_events(
                               sc.sipm, 0.0, scaled_duration, rng)
                               .size();
            counts.push_back(n);
            z.push_back(verify_dark_rate(n, sc.sipm, scaled_duration));
            within += std::abs(z.back()) <= 5 ? 1 : 0;
        }
        j["scaled"] = {
            {"duration_s", scaled_duration},
            {"expected", expected_dark_count(sc.sipm, scaled_duration)},
            {"trials", cfg.trials},
            {"counts", counts},
            {"z_scores", z},
            {"within_5_sigma", within},
            {"fraction_within_5_sigma",
             static_cast<double>(within) / static_cast<double>(cfg.trials)},
        };

        auto const traces = detail::group_dark_events(sc);
        auto const spectrum = detail::dark_tot_spectrum(
            sc, traces, sc.comparator.threshold);
        out.write_histogram("dark_tot.csv", spectrum);
        Json tot;
        tot["events"] = traces.events;
        tot["traces"] = traces.groups.size();
        tot["hits"] = spectrum.total();
        try
        {
            tot["single_photon_tot_ns"] = single_photon_tot(spectrum)
                                          * detail::ns;
        }
        catch (std::exception const&)
        {
            tot["single_photon_tot_ns"] = nullptr;
        }
        j["tot_spectrum"] = tot;

        if (!cfg.thresholds.empty())
        {
            auto const scan = threshold_scan(
                [&](double thr) {
                    return detail::dark_tot_spectrum(sc, traces, thr);
                },
                cfg.thresholds);
            Json steps = Json::array();
            for (auto const& s : scan.steps)
            {
                steps.push_back(
                    {{"threshold_v", s.threshold},
                     {"single_photon_present", s.single_photon_present},
                     {"first_peak_tot_ns",
                      s.first_peak_tot ? Json(*s.first_peak_tot * detail::ns)
                                       : Json(nullptr)},
                     {"count", s.count}});
            }
            j["threshold_scan"] = {{"max_threshold_v", scan.max_threshold},
                                   {"steps", steps}};
        }
    }
    return j;
}

//---------------------------------------------------------------------------//
// CALIBRATION
//---------------------------------------------------------------------------//
/*!
 * One ToT-energy model per operating point, from a measured CSV or from
 * reference sources pushed through the energy channel.
 */
inline Json run_calibrate(Scenario const& sc, Artifacts& out)
{
    auto const& cfg = sc.calibration;
    std::vector<CalibrationDataset> datasets;
    Json j;
    if (cfg.csv)
    {
        std::ifstream in(*cfg.csv);
        validate(static_cast<bool>(in),
                 "cannot open calibration CSV '" + *cfg.csv + "'");
        for (auto& [op, ds] : read_calibration_csv(in))
        {
            datasets.push_back(std::move(ds));
        }
        j["source"] = "csv";
    }
    else
    {
        std::string csv = "source_label,energy_keV,tot_ns,bias_V,threshold_V\n";
        Json lost = Json::array();
        for (std::size_t s = 0; s < cfg.settings.size(); ++s)
        {
            std::uint64_t rejected = 0;
            datasets.push_back(detail::simulate_calibration(
                sc, {cfg.settings[s][0], cfg.settings[s][1]}, s, &rejected));
            lost.push_back(rejected);
            detail::append_dataset_csv(csv, datasets.back());
        }
        out.write("calibration_dataset.csv", csv);
        j["source"] = "simulated";
        j["events_without_tot"] = lost;
    }

    Json models = Json::array();
    for (auto const& ds : datasets)
    {
        auto const m = detail::fit_dataset(ds, cfg.initial_d);
        std::vector<double> energies;
        for (auto const& p : ds.points)
        {
            energies.push_back(p.energy_kev);
        }
        Json mj = detail::model_json(m, ds.size());
        mj["setting"] = {{"bias_v", ds.setting.bias_v},
                         {"threshold_v", ds.setting.threshold_v}};
        mj["monotone"] = m.monotone_over(energies);
        models.push_back(mj);
    }
    out.write("calibration_models.json", models.dump(2) + "\n");
    j["models"] = models;
    return j;
}

//---------------------------------------------------------------------------//
// IMPEDANCE
//---------------------------------------------------------------------------//
/*!
 * OSL-correct a reflection sweep and find where |Z| leaves the limit.
 *
 * Without input files, a series R + jwL input seen through a fixed three-term
 * error box is synthesized; the raw sweeps are saved as Touchstone files.
 */
inline Json run_impedance(Scenario const& sc, Artifacts& out)
{
    auto const& cfg = sc.impedance;
    ReflectionSweep dut, open_m, short_m, load_m;
    Json j;
    if (cfg.dut)
    {
        dut = detail::read_sweep(*cfg.dut);
        open_m = detail::read_sweep(*cfg.open);
        short_m = detail::read_sweep(*cfg.short_std);
        load_m = detail::read_sweep(*cfg.load);
        j["source"] = "files";
    }
    else
    {
        double const r_in = cfg.r_in.value_or(input_impedance(sc.preamp));
        ErrorTerms box{{cfg.directivity[0], cfg.directivity[1]},
                       {cfg.source_match[0], cfg.source_match[1]},
                       {cfg.tracking[0], cfg.tracking[1]}};
        double const z0 = 50;
        for (auto* s : {&dut, &open_m, &short_m, &load_m})
        {
            s->reference_impedance = z0;
        }
        for (std::uint64_t k = 0; k < cfg.points; ++k)
        {
            double const f = cfg.f_start
                             + (cfg.f_stop - cfg.f_start)
                                   * static_cast<double>(k)
                                   / static_cast<double>(cfg.points - 1);
            Complex const z{r_in, 2 * constants::pi * f * cfg.inductance};
            dut.points.push_back({f, box.measure(impedance_to_gamma(z, z0))});
            open_m.points.push_back({f, box.measure(1.0)});
            short_m.points.push_back({f, box.measure(-1.0)});
            load_m.points.push_back({f, box.measure(0.0)});
        }
        auto save = [&](char const* name, ReflectionSweep const& s) {
            std::ostringstream os;
            write_touchstone(os, s);
            out.write(name, os.str());
        };
        save("raw_dut.s1p", dut);
        save("raw_open.s1p", open_m);
        save("raw_short.s1p", short_m);
        save("raw_load.s1p", load_m);

        j["source"] = "synthetic";
        j["r_in_ohm"] = r_in;
        j["inductance_h"] = cfg.inductance;
        double const reactance_at_limit = cfg.limit * cfg.limit - r_in * r_in;
        j["expected_crossing_hz"]
            = reactance_at_limit > 0 && cfg.inductance > 0
                  ? Json(std::sqrt(reactance_at_limit)
                         / (2 * constants::pi * cfg.inductance))
                  : Json(nullptr);
    }
    // Raw readings sit behind the fixture and need not look passive
    dut.validate(std::numeric_limits<double>::infinity());

    auto const corrected = osl_correct(dut, open_m, short_m, load_m);
    auto const z = s11_to_impedance(corrected);
    std::ostringstream os;
    write_impedance_csv(os, z);
    out.write("impedance.csv", os.str());

    std::uint64_t ill = 0;
    for (auto const& p : z.points)
    {
        ill += p.ill_conditioned ? 1 : 0;
    }
    j["points"] = z.points.size();
    j["ill_conditioned"] = ill;
    j["limit_ohm"] = cfg.limit;
    j["f_below_limit_hz"] = summarize_below(z, cfg.limit);
    return j;
}

//---------------------------------------------------------------------------//
// TOF-CT
//---------------------------------------------------------------------------//
namespace detail
{
//! Events timed by the full scintillator + SiPM + comparator chain
inline std::vector<MeasuredEvent> measure_events_chain(Scenario const& sc,
                                                       std::uint64_t& lost)
{
    auto const& cfg = sc.tofct;
    std::vector<MeasuredEvent> out;
    out.reserve(cfg.events);
    lost = 0;
    for (std::uint64_t i = 0; i < cfg.events; ++i)
    {
        auto xray = make_engine(sc.seed, StreamTag::xray, i);
        auto light = make_engine(sc.seed, StreamTag::scintillation, i);
        auto transit = make_engine(sc.seed, StreamTag::transit, i);
        MeasuredEvent m;
        m.event = simulate_event(sc.geometry, sc.xray_source, xray);
        auto fired = detect_photons(
            sc.sipm, scintillate(m.event, sc.scintillator, light), light);
        if (fired.empty())
        {
            ++lost;
            continue;
        }
        apply_transit_jitter(sc.sipm, fired, transit);
        double const t0 = fired.front().time - 1e-9;
        auto const wave = shape_pulse(avalanche_current(sc.sipm, fired),
                                      sc.preamp,
                                      cfg.sample_period,
                                      cfg.record_length,
                                      t0,
                                      sc.sipm.terminal_capacitance);
        auto const hits = discriminate(wave, sc.comparator, sc.seed, i);
        if (hits.empty())
        {
            ++lost;
            continue;
        }
        m.measured_time = hits.front().leading_edge;
        out.push_back(m);
    }
    return out;
}
}  // namespace detail

/*!
 * Scatter rejection by a time window on the measured arrival time.
 *
 * The window's upper edge is either given or the tightest one that keeps the
 * requested fraction of primaries.
 */
inline Json run_tofct(Scenario const& sc, Artifacts& out)
{
    auto const& cfg = sc.tofct;
    std::vector<MeasuredEvent> events;
    std::uint64_t lost = 0;
    if (cfg.timing_mode == "chain")
    {
        events = detail::measure_events_chain(sc, lost);
    }
    else
    {
        events = measure_events(
            sc.geometry, sc.xray_source, cfg.timing_fwhm, cfg.events, sc.seed);
    }

    TimeWindow window;
    if (cfg.window_hi)
    {
        window.hi = *cfg.window_hi;
    }
    else
    {
        window = acceptance_window(events, cfg.primary_acceptance);
    }
    auto const kept = tof_filter(events, window);
    auto const before = count_scatter(events);
    auto const after = count_scatter(kept);
    double const spr_before = spr(before);
    double const spr_after = spr(after);

    // System timing response as seen on primaries
    std::vector<double> residual;
    std::vector<double> primary_t, scattered_t;
    for (auto const& e : events)
    {
        if (e.event.scattered)
        {
            scattered_t.push_back(e.measured_time);
        }
        else
        {
            primary_t.push_back(e.measured_time);
            residual.push_back(e.measured_time - e.event.arrival_time);
        }
    }
    double timing_fwhm = cfg.timing_fwhm;
    if (cfg.timing_mode == "chain")
    {
        timing_fwhm = fwhm(detail::histogram_of(residual, sc.tdc.delta_t_lsb))
                          .fwhm;
    }
    out.write_histogram("tof_primary.csv",
                        detail::histogram_of(primary_t, sc.tdc.delta_t_lsb));
    out.write_histogram("tof_scattered.csv",
                        detail::histogram_of(scattered_t, sc.tdc.delta_t_lsb));

    Json j;
    j["timing_mode"] = cfg.timing_mode;
    j["events"] = events.size();
    j["events_without_hit"] = lost;
    j["primary_before"] = before.primary;
    j["scattered_before"] = before.scattered;
    j["primary_after"] = after.primary;
    j["scattered_after"] = after.scattered;
    j["spr_before"] = spr_before;
    j["spr_after"] = spr_after;
    j["reduction_pct"] = spr_before > 0 ? Json(spr_reduction(spr_before, spr_after))
                                        : Json(nullptr);
    j["primary_acceptance"] = static_cast<double>(after.primary)
                              / static_cast<double>(before.primary);
    j["window"] = {detail::optional_number(window.lo),
                   detail::optional_number(window.hi)};
    j["timing_fwhm_ps"] = timing_fwhm * detail::ps;
    return j;
}

//---------------------------------------------------------------------------//
// SPECTRUM
//---------------------------------------------------------------------------//
/*!
 * Bremsstrahlung spectrum seen through the energy channel: ToT spectrum,
 * 8-bin energy classes and the energy spectrum recovered by inverting the
 * calibration.
 */
inline Json run_spectrum(Scenario const& sc, Artifacts& out)
{
    auto const& cfg = sc.spectrum;
    double const threshold = sc.energy_channel.threshold;
    Json j;

    CalibrationModel model;
    if (cfg.model)
    {
        model = CalibrationModel::from_params(
            {(*cfg.model)[0], (*cfg.model)[1], (*cfg.model)[2], (*cfg.model)[3]});
        j["calibration"] = "given";
    }
    else
    {
        auto const ds = detail::simulate_calibration(
            sc, {sc.sipm.bias_voltage, threshold}, 0);
        model = detail::fit_dataset(ds, sc.calibration.initial_d);
        j["calibration"] = "fitted";
    }
    j["model"] = {{"a", model.a}, {"b", model.b}, {"c", model.c}, {"d", model.d}};

    std::vector<double> true_e, tot, recon;
    std::uint64_t no_hit = 0;
    std::uint64_t not_invertible = 0;
    for (std::uint64_t i = 0; i < cfg.events; ++i)
    {
        auto rng = make_engine(sc.seed, StreamTag::xray, i);
        double const e = sample_bremsstrahlung(sc.xray_source, rng);
        true_e.push_back(e);
        auto const t = detail::energy_channel_tot(sc, sc.sipm, e, threshold, rng);
        if (!t)
        {
            ++no_hit;
            continue;
        }
        tot.push_back(*t);
        try
        {
            recon.push_back(invert(*t * detail::ns, model));
        }
        catch (DomainError const&)
        {
            ++not_invertible;
        }
        catch (OutOfRange const&)
        {
            ++not_invertible;
        }
        catch (NoSolution const&)
        {
            ++not_invertible;  // beyond the fitted turning point
        }
    }

    // Energy classes: configured edges, else uniform over the observed range
    TdcConfig tdc = sc.tdc;
    if (!sc.tdc_edges_explicit && !tot.empty())
    {
        auto const [lo, hi] = std::minmax_element(tot.begin(), tot.end());
        double const width = (*hi - *lo) / num_energy_bins;
        if (width > 0)
        {
            tdc.energy_bin_edges = uniform_energy_edges(*lo + width, *hi - width);
        }
    }
    std::array<std::uint64_t, num_energy_bins> classes{};
    auto tot_hist = Histogram::uniform(1, 0.0, tdc.tot_bin_width);
    for (double t : tot)
    {
        auto const code = quantize_tot(t, tdc);
        detail::add_code(tot_hist, code);
        classes[static_cast<std::size_t>(
            classify_energy(static_cast<double>(code) * tdc.tot_bin_width, tdc))]
            += 1;
    }

    out.write_histogram("energy_true.csv",
                        detail::histogram_of(true_e, cfg.energy_bin_width));
    out.write_histogram("energy_reconstructed.csv",
                        detail::histogram_of(recon, cfg.energy_bin_width));
    out.write_histogram("tot.csv", tot_hist);

    double mean_true = 0;
    for (double e : true_e)
    {
        mean_true += e;
    }
    double mean_recon = 0;
    for (double e : recon)
    {
        mean_recon += e;
    }
    j["events"] = cfg.events;
    j["events_without_tot"] = no_hit;
    j["not_invertible"] = not_invertible;
    j["mean_true_kev"] = mean_true / static_cast<double>(true_e.size());
    j["mean_reconstructed_kev"]
        = recon.empty() ? Json(nullptr)
                        : Json(mean_recon / static_cast<double>(recon.size()));
    std::vector<double> edges_ns;
    for (double e : tdc.energy_bin_edges)
    {
        edges_ns.push_back(e * detail::ns);
    }
    j["energy_bin_edges_ns"] = edges_ns;
    j["energy_bin_counts"] = classes;
    return j;
}

//---------------------------------------------------------------------------//
// DRIVER
//---------------------------------------------------------------------------//
inline std::string compiler_id()
{
#if defined(__clang__)
    return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    return std::string("gcc ") + __VERSION__;
#else
    return "unknown";
#endif
}

/*!
 * Run the scenario's experiment and write its artifacts.
 *
 * Produces result.json, config.json (effective configuration) and
 * manifest.txt next to the experiment's histograms. Everything is a function
 * of the scenario alone.
 */
inline Json run(Scenario const& sc, std::filesystem::path const& out_dir)
{
    Artifacts out(out_dir);
    Json body;
    try
    {
        switch (sc.experiment)
        {
            case Experiment::sptr:
                body = run_sptr(sc, out);
                break;
            case Experiment::darkcount:
                body = run_darkcount(sc, out);
                break;
            case Experiment::calibrate:
                body = run_calibrate(sc, out);
                break;
            case Experiment::impedance:
                body = run_impedance(sc, out);
                break;
            case Experiment::tofct:
                body = run_tofct(sc, out);
                break;
            case Experiment::spectrum:
                body = run_spectrum(sc, out);
                break;
        }
    }
    catch (std::exception const& e)
    {
        throw std::runtime_error(std::string(to_cstring(sc.experiment))
                                 + " experiment failed: " + e.what());
    }

    Json result;
    result["experiment"] = to_cstring(sc.experiment);
    result["seed"] = sc.seed;
    result.update(body);
    out.write("result.json", result.dump(2) + "\n");
    out.write("config.json", sc.effective.dump(2) + "\n");

    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(config_hash(sc.effective)));
    std::string manifest;
    manifest += "experiment " + std::string(to_cstring(sc.experiment)) + "\n";
    manifest += "seed " + std::to_string(sc.seed) + "\n";
    manifest += "config_hash fnv1a64:" + std::string(hash) + "\n";
    manifest += "version " SIPMTWIN_VERSION "\n";
    manifest += "compiler " + compiler_id() + "\n";
    for (auto const& [k, v] : out.notes())
    {
        manifest += k + " " + v + "\n";
    }
    out.write("manifest.txt", manifest);
    return result;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin::cli
