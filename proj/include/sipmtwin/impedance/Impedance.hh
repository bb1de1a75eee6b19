//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/impedance/Impedance.hh
//! One-port reflection processing: OSL correction, S11 -> Z, summaries.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sipmtwin/core/Constants.hh"
#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/Format.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
using Complex = std::complex<double>;

inline constexpr double max_sweep_frequency = 5e9;

struct ReflectionPoint
{
    double frequency{0};  //!< [Hz]
    Complex s11{0, 0};
    bool ill_conditioned{false};  //!< Set by OSL correction
};

struct ReflectionSweep
{
    std::vector<ReflectionPoint> points;
    double reference_impedance{50};  //!< [Ohm]

    std::size_t size() const { return points.size(); }

    void validate(double passive_tolerance = 1e-6) const
    {
        using sipmtwin::validate;
        validate(reference_impedance > 0, "reference impedance must be positive");
        for (std::size_t i = 0; i < points.size(); ++i)
        {
            auto const f = points[i].frequency;
            validate(f > 0 && f <= max_sweep_frequency,
                     "sweep frequencies must lie in (0, 5 GHz]");
            validate(i == 0 || f > points[i - 1].frequency,
                     "sweep frequencies must be strictly ascending");
            validate(std::abs(points[i].s11) <= 1 + passive_tolerance,
                     "|S11| > 1 for a passive device at "
                         + std::to_string(f) + " Hz");
        }
    }
};

struct ImpedancePoint
{
    double frequency{0};  //!< [Hz]
    Complex z{0, 0};  //!< [Ohm]
    bool open_circuit{false};  //!< Gamma == 1: infinite impedance
    bool ill_conditioned{false};  //!< Excluded from summaries
};

struct ImpedanceSpectrum
{
    std::vector<ImpedancePoint> points;
};

//---------------------------------------------------------------------------//
// CONVERSION
//---------------------------------------------------------------------------//
//! Z = Z0 (1 + Gamma) / (1 - Gamma); Gamma == 1 yields an infinite value
inline Complex gamma_to_impedance(Complex gamma, double z0)
{
    if (gamma == Complex{1, 0})
    {
        return {std::numeric_limits<double>::infinity(), 0};
    }
    return z0 * (1.0 + gamma) / (1.0 - gamma);
}

//! Gamma = (Z - Z0) / (Z + Z0)
inline Complex impedance_to_gamma(Complex z, double z0)
{
    return (z - z0) / (z + z0);
}

inline ImpedanceSpectrum s11_to_impedance(ReflectionSweep const& sweep)
{
    ImpedanceSpectrum out;
    out.points.reserve(sweep.size());
    for (auto const& p : sweep.points)
    {
        ImpedancePoint z;
        z.frequency = p.frequency;
        z.open_circuit = p.s11 == Complex{1, 0};
        z.z = gamma_to_impedance(p.s11, sweep.reference_impedance);
        z.ill_conditioned = p.ill_conditioned;
        out.points.push_back(z);
    }
    return out;
}

//---------------------------------------------------------------------------//
// OSL CORRECTION
//---------------------------------------------------------------------------//
//! Three-term one-port error model
struct ErrorTerms
{
    Complex directivity;  //!< e00
    Complex source_match;  //!< e11
    Complex tracking;  //!< e10 e01

    //! Raw reading for a true reflection coefficient
    Complex measure(Complex gamma) const
    {
        return directivity + tracking * gamma / (1.0 - source_match * gamma);
    }

    //! True reflection coefficient for a raw reading
    Complex correct(Complex measured) const
    {
        Complex const m = measured - directivity;
        return m / (tracking + source_match * m);
    }
};

/*!
 * Error terms from ideal open (+1), short (-1) and load (0) readings.
 *
 * Returns false when any two standards coincide (to \p tol) or the tracking
 * term vanishes, which leaves the system singular.
 */
inline bool solve_error_terms(Complex open_m,
                              Complex short_m,
                              Complex load_m,
                              ErrorTerms& terms,
                              double tol = 1e-12)
{
    if (std::abs(open_m - short_m) <= tol || std::abs(open_m - load_m) <= tol
        || std::abs(short_m - load_m) <= tol)
    {
        return false;
    }
    terms.directivity = load_m;
    terms.source_match = (open_m + short_m - 2.0 * load_m) / (open_m - short_m);
    // delta_e = e00 e11 - e10e01 from the open equation
    Complex const delta_e
        = load_m + open_m * terms.source_match - open_m;
    terms.tracking = load_m * terms.source_match - delta_e;
    return std::abs(terms.tracking) > tol
           && std::isfinite(std::abs(terms.tracking));
}

/*!
 * Correct a DUT sweep with open/short/load standard sweeps.
 *
 * All four sweeps must share one frequency grid. Frequencies where the
 * standards are degenerate keep the raw reading and are flagged
 * ill-conditioned; the rest of the sweep is unaffected.
 */
inline ReflectionSweep osl_correct(ReflectionSweep const& dut,
                                   ReflectionSweep const& open_m,
                                   ReflectionSweep const& short_m,
                                   ReflectionSweep const& load_m)
{
    auto same_grid = [&](ReflectionSweep const& s) {
        if (s.size() != dut.size())
        {
            return false;
        }
        for (std::size_t i = 0; i < s.size(); ++i)
        {
            if (s.points[i].frequency != dut.points[i].frequency)
            {
                return false;
            }
        }
        return true;
    };
    validate(same_grid(open_m) && same_grid(short_m) && same_grid(load_m),
             "OSL standards and DUT must share the same frequency grid");

    ReflectionSweep out = dut;
    for (std::size_t i = 0; i < dut.size(); ++i)
    {
        ErrorTerms terms;
        auto& p = out.points[i];
        if (!solve_error_terms(open_m.points[i].s11,
                               short_m.points[i].s11,
                               load_m.points[i].s11,
                               terms))
        {
            p.ill_conditioned = true;
            continue;
        }
        p.s11 = terms.correct(dut.points[i].s11);
    }
    return out;
}

//---------------------------------------------------------------------------//
// SUMMARY
//---------------------------------------------------------------------------//
/*!
 * Largest frequency f* with |Z| < limit at every (well-conditioned) point up
 * to and including f*; zero if the first point already violates.
 */
inline double summarize_below(ImpedanceSpectrum const& spectrum, double limit)
{
    validate<EmptyInput>(!spectrum.points.empty(), "impedance spectrum is empty");
    double f_star = 0;
    for (auto const& p : spectrum.points)
    {
        if (p.ill_conditioned)
        {
            continue;
        }
        if (p.open_circuit || !(std::abs(p.z) < limit))
        {
            break;
        }
        f_star = p.frequency;
    }
    return f_star;
}

//---------------------------------------------------------------------------//
// FILE FORMATS
//---------------------------------------------------------------------------//
namespace detail
{
inline std::string to_upper(std::string s)
{
    for (auto& ch : s)
    {
        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    return s;
}
}  // namespace detail

/*!
 * Read a one-port Touchstone file.
 *
 * Supports the option line "# <unit> S <RI|MA|DB> R <z0>" with units
 * HZ/KHZ/MHZ/GHZ; defaults follow Touchstone (GHz, MA, 50 Ohm). Lines
 * starting with '!' and trailing comments are ignored.
 */
inline ReflectionSweep read_touchstone(std::istream& is)
{
    ReflectionSweep sweep;
    double unit = 1e9;
    std::string format = "MA";
    std::string line;
    std::size_t row = 0;
    while (std::getline(is, line))
    {
        ++row;
        if (auto bang = line.find('!'); bang != std::string::npos)
        {
            line.erase(bang);
        }
        std::istringstream ss(line);
        std::string first;
        if (!(ss >> first))
        {
            continue;
        }
        if (first[0] == '#')
        {
            std::string rest = first.substr(1);
            std::string tok;
            std::vector<std::string> toks;
            if (!rest.empty())
            {
                toks.push_back(detail::to_upper(rest));
            }
            while (ss >> tok)
            {
                toks.push_back(detail::to_upper(tok));
            }
            for (std::size_t k = 0; k < toks.size(); ++k)
            {
                auto const& t = toks[k];
                if (t == "HZ")
                    unit = 1;
                else if (t == "KHZ")
                    unit = 1e3;
                else if (t == "MHZ")
                    unit = 1e6;
                else if (t == "GHZ")
                    unit = 1e9;
                else if (t == "RI" || t == "MA" || t == "DB")
                    format = t;
                else if (t == "S")
                    continue;
                else if (t == "R" && k + 1 < toks.size())
                    sweep.reference_impedance = std::stod(toks[++k]);
                else
                    throw InvalidArgument("unsupported Touchstone option '"
                                          + t + "'");
            }
            continue;
        }
        double v1 = 0, v2 = 0;
        validate(static_cast<bool>(ss >> v1 >> v2),
                 "malformed Touchstone data line " + std::to_string(row));
        double const f = std::stod(first) * unit;
        Complex s;
        if (format == "RI")
        {
            s = {v1, v2};
        }
        else
        {
            double const mag = format == "MA" ? v1 : std::pow(10.0, v1 / 20);
            s = std::polar(mag, v2 * constants::pi / 180);
        }
        sweep.points.push_back({f, s, false});
    }
    return sweep;
}

//! Write "# Hz S RI R <z0>" followed by one line per point
inline void write_touchstone(std::ostream& os, ReflectionSweep const& sweep)
{
    std::string out = "! one-port reflection data\n# Hz S RI R ";
    append_number(out, sweep.reference_impedance);
    out += '\n';
    for (auto const& p : sweep.points)
    {
        append_number(out, p.frequency);
        out += ' ';
        append_number(out, p.s11.real());
        out += ' ';
        append_number(out, p.s11.imag());
        out += '\n';
    }
    os << out;
}

//! Read "freq_hz,re_s11,im_s11" CSV
inline ReflectionSweep read_reflection_csv(std::istream& is,
                                           double reference_impedance = 50)
{
    ReflectionSweep sweep;
    sweep.reference_impedance = reference_impedance;
    std::string line;
    validate(static_cast<bool>(std::getline(is, line)),
             "reflection CSV is empty");
    validate(line.rfind("freq_hz,re_s11,im_s11", 0) == 0,
             "reflection CSV must start with header freq_hz,re_s11,im_s11");
    std::size_t row = 1;
    while (std::getline(is, line))
    {
        ++row;
        if (line.empty() || line == "\r")
        {
            continue;
        }
        std::istringstream ss(line);
        std::string f, re, im;
        validate(std::getline(ss, f, ',') && std::getline(ss, re, ',')
                     && std::getline(ss, im),
                 "malformed reflection CSV row " + std::to_string(row));
        sweep.points.push_back(
            {std::stod(f), Complex{std::stod(re), std::stod(im)}, false});
    }
    return sweep;
}

//! Write "freq_hz,re_z,im_z,abs_z"; open circuits print inf
inline void write_impedance_csv(std::ostream& os, ImpedanceSpectrum const& z)
{
    std::string out = "freq_hz,re_z,im_z,abs_z\n";
    for (auto const& p : z.points)
    {
        append_number(out, p.frequency);
        out += ',';
        append_number(out, p.z.real());
        out += ',';
        append_number(out, p.z.imag());
        out += ',';
        append_number(out, std::abs(p.z));
        out += '\n';
    }
    os << out;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
