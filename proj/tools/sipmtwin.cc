//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tools/sipmtwin.cc
//! Command-line scenario runner.
//---------------------------------------------------------------------------//
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sipmtwin/analysis/Analysis.hh"
#include "sipmtwin/cli/Experiments.hh"
#include "sipmtwin/cli/Scenario.hh"

namespace
{
using namespace sipmtwin;
using namespace sipmtwin::cli;

struct RunFlags
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::uint64_t> trials;
};

//! Apply --trials to the experiment's main repetition count
void apply_trials(Scenario& sc, std::uint64_t n)
{
    validate(n > 0, "--trials must be positive");
    char const* key = nullptr;
    switch (sc.experiment)
    {
        case Experiment::sptr:
            sc.sptr.pulses = n;
            key = "sptr.pulses";
            break;
        case Experiment::darkcount:
            sc.darkcount.trials = n;
            key = "darkcount.trials";
            break;
        case Experiment::calibrate:
            sc.calibration.events_per_source = n;
            key = "calibration.events_per_source";
            break;
        case Experiment::tofct:
            sc.tofct.events = n;
            key = "tofct.events";
            break;
        case Experiment::spectrum:
            sc.spectrum.events = n;
            key = "spectrum.events";
            break;
        case Experiment::impedance:
            sc.impedance.points = n;
            key = "impedance.points";
            break;
    }
    std::string const k(key);
    auto const dot = k.find('.');
    sc.effective[k.substr(0, dot)][k.substr(dot + 1)] = n;
}

int run_experiment(Experiment e, RunFlags const& flags)
{
    Scenario sc = flags.config.empty()
                      ? parse_scenario(Json::object(), e)
                      : load_scenario(flags.config, e);
    if (flags.seed)
    {
        sc.seed = *flags.seed;
        sc.effective["seed"] = sc.seed;
    }
    if (flags.out)
    {
        sc.output_dir = *flags.out;
    }
    if (flags.trials)
    {
        apply_trials(sc, *flags.trials);
    }
    auto const result = run(sc, sc.output_dir);
    std::cout << result.dump(2) << '\n';
    return 0;
}

int run_fwhm(std::string const& path, std::string const& method)
{
    std::ifstream in(path);
    validate(static_cast<bool>(in), "cannot open histogram '" + path + "'");
    auto const res = fwhm(read_histogram_csv(in), fwhm_method_from_string(method));
    Json j;
    j["fwhm"] = res.fwhm;
    j["fwhm_ps"] = res.fwhm * 1e12;
    j["peak_center"] = res.peak_center;
    j["n_events"] = res.n_events;
    j["method"] = to_cstring(res.method);
    std::cout << j.dump(2) << '\n';
    return 0;
}
}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SiPM readout-chain digital twin: scenario runner"};
    app.set_version_flag("--version", SIPMTWIN_VERSION);
    app.require_subcommand(1);

    RunFlags flags;
    struct Sub
    {
        Experiment experiment;
        char const* help;
    };
    Sub const subs[] = {
        {Experiment::sptr, "Laser single-photon timing resolution"},
        {Experiment::darkcount, "Dark-count expectation and ToT spectrum"},
        {Experiment::calibrate, "Fit ToT-energy models per operating point"},
        {Experiment::impedance, "OSL-corrected input impedance sweep"},
        {Experiment::tofct, "Time-of-flight scatter rejection"},
        {Experiment::spectrum, "Bremsstrahlung spectrum via ToT"},
    };
    std::optional<Experiment> chosen;
    for (auto const& s : subs)
    {
        auto* cmd = app.add_subcommand(to_cstring(s.experiment), s.help);
        cmd->add_option("--config", flags.config, "Scenario file (JSON, comments allowed)")
            ->check(CLI::ExistingFile);
        cmd->add_option("--seed", flags.seed, "Override the scenario seed");
        cmd->add_option("--out", flags.out, "Output directory");
        cmd->add_option("--trials", flags.trials, "Override the repetition count");
        cmd->callback([&chosen, e = s.experiment] { chosen = e; });
    }

    std::string hist_path;
    std::string method = "interpolated";
    auto* fw = app.add_subcommand("fwhm", "FWHM of a histogram CSV");
    fw->add_option("--hist", hist_path, "Histogram CSV (bin_low,bin_high,count)")
        ->required()
        ->check(CLI::ExistingFile);
    fw->add_option("--method", method, "interpolated or gaussian_fit");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (fw->parsed())
        {
            return run_fwhm(hist_path, method);
        }
        return run_experiment(*chosen, flags);
    }
    catch (std::exception const& e)
    {
        std::cerr << "sipmtwin: " << e.what() << '\n';
        return 2;
    }
}
