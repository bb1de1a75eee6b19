//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/calibration/Calibration.hh
//! ToT <-> energy calibration with a log-quadratic response model.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <istream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/LevenbergMarquardt.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
//! Monoenergetic reference line (nuclide-chart values, not measurements)
struct ReferenceSource
{
    std::string_view label;
    double energy_kev;
};

inline constexpr std::array<ReferenceSource, 4> reference_sources{{
    {"Am-241", 59.5},
    {"Co-57", 122.0},
    {"Ge-68", 511.0},
    {"Cs-137", 662.0},
}};

//! SiPM bias and comparator threshold a calibration belongs to
struct OperatingPoint
{
    double bias_v{0};
    double threshold_v{0};

    friend auto operator<=>(OperatingPoint const&, OperatingPoint const&)
        = default;
};

struct CalibrationPoint
{
    std::string source;
    double energy_kev{0};
    double tot_ns{0};
};

struct CalibrationDataset
{
    std::vector<CalibrationPoint> points;
    OperatingPoint setting;

    std::size_t size() const { return points.size(); }

    void validate() const
    {
        using sipmtwin::validate;
        validate(points.size() >= 4,
                 "calibration needs at least 4 points for 4 parameters");
        for (auto const& p : points)
        {
            validate(p.energy_kev > 0 && p.tot_ns > 0,
                     "calibration energies and ToT values must be positive");
        }
    }
};

struct FitDiagnostics
{
    double final_s{0};  //!< [ns^2]
    double initial_s{0};
    int iterations{0};
    bool converged{false};
    //! sqrt(diag(s^2 (J^T J)^-1)) with s^2 = S / (N - 4); zero if N <= 4
    std::array<double, 4> std_errors{};
    std::vector<double> s_history;
};

/*!
 * ToT(E) = a + b ln(E + d) + c ln^2(E + d).
 *
 * a, b, c in ns; d in keV shifts the log argument away from zero at low
 * energies.
 */
struct CalibrationModel
{
    double a{0};
    double b{1};
    double c{0};
    double d{0};
    FitDiagnostics fit;

    Eigen::Vector4d params() const { return {a, b, c, d}; }

    static CalibrationModel from_params(Eigen::Vector4d const& p)
    {
        CalibrationModel m;
        m.a = p[0];
        m.b = p[1];
        m.c = p[2];
        m.d = p[3];
        return m;
    }

    //! dToT/d ln(E + d) > 0 at every given energy
    bool monotone_over(std::span<double const> energies) const
    {
        return std::all_of(energies.begin(), energies.end(), [this](double e) {
            return e + d > 0 && b + 2 * c * std::log(e + d) > 0;
        });
    }
};

//---------------------------------------------------------------------------//
// MODEL
//---------------------------------------------------------------------------//
inline double tot_model(double energy_kev, CalibrationModel const& m)
{
    double const arg = energy_kev + m.d;
    validate<DomainError>(arg > 0, "ToT model evaluated with E + d <= 0");
    double const u = std::log(arg);
    return m.a + m.b * u + m.c * u * u;
}

//! S = sum_i (ToT_i - model(E_i))^2
inline double residual_sum(CalibrationDataset const& ds,
                           CalibrationModel const& m)
{
    double s = 0;
    for (auto const& p : ds.points)
    {
        double const r = p.tot_ns - tot_model(p.energy_kev, m);
        s += r * r;
    }
    return s;
}

using CalibrationJacobian = Eigen::Matrix<double, Eigen::Dynamic, 4>;

//! Rows (1, u, u^2, (b + 2 c u) / (E + d)) with u = ln(E + d)
inline CalibrationJacobian jacobian(CalibrationDataset const& ds,
                                    CalibrationModel const& m)
{
    CalibrationJacobian j(static_cast<Eigen::Index>(ds.size()), 4);
    for (std::size_t i = 0; i < ds.size(); ++i)
    {
        double const arg = ds.points[i].energy_kev + m.d;
        validate<DomainError>(arg > 0, "Jacobian evaluated with E + d <= 0");
        double const u = std::log(arg);
        auto const row = static_cast<Eigen::Index>(i);
        j(row, 0) = 1;
        j(row, 1) = u;
        j(row, 2) = u * u;
        j(row, 3) = (m.b + 2 * m.c * u) / arg;
    }
    return j;
}

//---------------------------------------------------------------------------//
// FIT
//---------------------------------------------------------------------------//
/*!
 * Starting point: fix d, then solve the linear least-squares problem for
 * (a, b, c) in u = ln(E + d).
 */
inline CalibrationModel initial_guess(CalibrationDataset const& ds,
                                      double d0 = 1.0)
{
    ds.validate();
    Eigen::MatrixXd design(ds.size(), 3);
    Eigen::VectorXd y(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
    {
        double const arg = ds.points[i].energy_kev + d0;
        validate<DomainError>(arg > 0, "initial d places E + d <= 0");
        double const u = std::log(arg);
        auto const row = static_cast<Eigen::Index>(i);
        design(row, 0) = 1;
        design(row, 1) = u;
        design(row, 2) = u * u;
        y[row] = ds.points[i].tot_ns;
    }
    Eigen::Vector3d const abc
        = design.colPivHouseholderQr().solve(y);
    CalibrationModel m;
    m.a = abc[0];
    m.b = abc[1];
    m.c = abc[2];
    m.d = d0;
    return m;
}

namespace detail
{
struct CalibrationProblem
{
    CalibrationDataset const& ds;
    double min_energy;

    Eigen::VectorXd residuals(Eigen::Vector4d const& p) const
    {
        auto const m = CalibrationModel::from_params(p);
        Eigen::VectorXd r(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i)
        {
            r[static_cast<Eigen::Index>(i)]
                = ds.points[i].tot_ns - tot_model(ds.points[i].energy_kev, m);
        }
        return r;
    }

    CalibrationJacobian model_jacobian(Eigen::Vector4d const& p) const
    {
        return jacobian(ds, CalibrationModel::from_params(p));
    }

    bool in_domain(Eigen::Vector4d const& p) const
    {
        return p.allFinite() && min_energy + p[3] > 0;
    }
};
}  // namespace detail

/*!
 * Least-squares fit of the log-quadratic model (unweighted).
 *
 * Damped Gauss-Newton with the analytic Jacobian. Stops when the relative
 * change of S drops below 1e-10 or after 200 iterations; \c fit.converged
 * reports which. Throws \c FitFailed when the normal equations are singular
 * at every damping level.
 */
inline CalibrationModel fit(CalibrationDataset const& ds,
                            CalibrationModel const& initial,
                            LmOptions const& opts = {})
{
    ds.validate();
    double min_energy = std::numeric_limits<double>::infinity();
    double scale = 0;
    for (auto const& p : ds.points)
    {
        min_energy = std::min(min_energy, p.energy_kev);
        scale += p.tot_ns * p.tot_ns;
    }
    detail::CalibrationProblem problem{ds, min_energy};

    LmOptions o = opts;
    o.cost_floor = std::max(o.cost_floor, 1e-28 * scale);
    auto const lm = levenberg_marquardt<4>(problem, initial.params(), o);

    auto model = CalibrationModel::from_params(lm.params);
    model.fit.final_s = lm.final_cost;
    model.fit.initial_s = lm.initial_cost;
    model.fit.iterations = lm.iterations;
    model.fit.converged = lm.converged;
    model.fit.s_history = lm.cost_history;

    auto const n = static_cast<double>(ds.size());
    if (n > 4)
    {
        auto const j = jacobian(ds, model);
        Eigen::Matrix4d const jtj = j.transpose() * j;
        Eigen::FullPivLU<Eigen::Matrix4d> lu(jtj);
        if (lu.isInvertible())
        {
            Eigen::Matrix4d const cov = lu.inverse() * (lm.final_cost / (n - 4));
            for (int k = 0; k < 4; ++k)
            {
                model.fit.std_errors[k] = std::sqrt(std::max(cov(k, k), 0.0));
            }
        }
    }
    return model;
}

inline CalibrationModel fit(CalibrationDataset const& ds)
{
    return fit(ds, initial_guess(ds));
}

//---------------------------------------------------------------------------//
// INVERSION
//---------------------------------------------------------------------------//
/*!
 * Energy for a ToT on the monotone branch of the model.
 *
 * Solves c u^2 + b u + (a - ToT) = 0 for u = ln(E + d) taking the root with
 * b + 2 c u > 0, then E = exp(u) - d. Throws \c NoSolution when the
 * discriminant is negative (ToT beyond the model's turning point) and
 * \c OutOfRange when the root maps to a non-positive energy.
 */
inline double invert(double tot_ns, CalibrationModel const& m)
{
    validate<OutOfRange>(std::isfinite(tot_ns), "ToT is not finite");
    double u;
    if (m.c == 0)
    {
        validate<NoSolution>(m.b > 0, "linear model must have b > 0");
        u = (tot_ns - m.a) / m.b;
    }
    else
    {
        double const disc = m.b * m.b + 4 * m.c * (tot_ns - m.a);
        validate<NoSolution>(disc >= 0,
                             "ToT outside the range of the model (negative "
                             "discriminant)");
        double const root = std::sqrt(disc);
        // Cancellation-free form of (-b + sqrt(disc)) / (2c) when b >= 0
        u = m.b >= 0 ? 2 * (tot_ns - m.a) / (m.b + root)
                     : (-m.b + root) / (2 * m.c);
        validate<NoSolution>(m.b + 2 * m.c * u >= 0,
                             "no root on the monotone branch");
    }
    double const energy = std::exp(u) - m.d;
    validate<OutOfRange>(std::isfinite(energy) && energy > 0,
                         "ToT maps to a non-positive energy");
    return energy;
}

//---------------------------------------------------------------------------//
// CSV INGESTION
//---------------------------------------------------------------------------//
/*!
 * Read "source_label,energy_keV,tot_ns,bias_V,threshold_V" rows and split
 * them into one dataset per operating point.
 */
inline std::map<OperatingPoint, CalibrationDataset>
read_calibration_csv(std::istream& is)
{
    std::map<OperatingPoint, CalibrationDataset> out;
    std::string line;
    validate(static_cast<bool>(std::getline(is, line)),
             "calibration CSV is empty");
    validate(line.rfind("source_label,energy_keV,tot_ns,bias_V,threshold_V", 0)
                 == 0,
             "calibration CSV must start with header "
             "source_label,energy_keV,tot_ns,bias_V,threshold_V");
    std::size_t row = 1;
    while (std::getline(is, line))
    {
        ++row;
        if (!line.empty() && line.back() == '\r')
        {
            line.pop_back();
        }
        if (line.empty())
        {
            continue;
        }
        std::istringstream ss(line);
        std::string label, e, t, bias, thr;
        bool const ok = std::getline(ss, label, ',') && std::getline(ss, e, ',')
                        && std::getline(ss, t, ',')
                        && std::getline(ss, bias, ',') && std::getline(ss, thr);
        validate(ok, "malformed calibration CSV row " + std::to_string(row));
        OperatingPoint op{std::stod(bias), std::stod(thr)};
        auto& ds = out[op];
        ds.setting = op;
        ds.points.push_back({label, std::stod(e), std::stod(t)});
    }
    return out;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
