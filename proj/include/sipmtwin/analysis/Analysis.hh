//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/analysis/Analysis.hh
//! Histogram measurement procedures: peaks, single-photon ToT, FWHM, dark
//! rate verification and threshold scans.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sipmtwin/core/Constants.hh"
#include "sipmtwin/core/Error.hh"
#include "sipmtwin/core/LevenbergMarquardt.hh"
#include "sipmtwin/photodetector/Photodetector.hh"
#include "sipmtwin/tdc/Tdc.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
inline constexpr double default_min_prominence = 0.05;

struct Peak
{
    std::size_t index{0};  //!< Bin at the middle of the peak plateau
    double center{0};
    std::uint64_t height{0};
    std::uint64_t prominence{0};
};

//! Peaks in ascending bin order
struct PeakSet
{
    std::vector<Peak> peaks;

    bool empty() const { return peaks.empty(); }
    std::size_t size() const { return peaks.size(); }
};

//---------------------------------------------------------------------------//
/*!
 * Local maxima whose prominence is at least \p min_prominence * max(counts).
 *
 * The histogram is treated as zero-padded on both sides, so a maximum on an
 * edge bin is a (boundary) peak whose prominence is measured against the
 * interior side. Flat tops count once, centered on the plateau. Prominence is
 * the height above the higher of the two lowest points reached before
 * climbing to a strictly higher bin on each side.
 */
inline PeakSet find_peaks(Histogram const& h,
                          double min_prominence = default_min_prominence)
{
    validate<EmptyInput>(!h.empty(), "histogram has no bins");
    std::uint64_t const max = h.max_count();
    validate<EmptyInput>(max > 0, "histogram is all zero");

    auto const& c = h.counts;
    std::size_t const n = c.size();
    double const floor = min_prominence * static_cast<double>(max);

    PeakSet result;
    std::size_t i = 0;
    while (i < n)
    {
        std::uint64_t const left = i == 0 ? 0 : c[i - 1];
        std::size_t j = i;
        while (j + 1 < n && c[j + 1] == c[i])
        {
            ++j;
        }
        std::uint64_t const right = j + 1 < n ? c[j + 1] : 0;
        if (c[i] > left && c[i] > right)
        {
            std::uint64_t const height = c[i];
            std::uint64_t left_min = height;
            std::size_t k = i;
            while (k > 0 && c[k - 1] <= height)
            {
                --k;
                left_min = std::min(left_min, c[k]);
            }
            if (k == 0)
            {
                left_min = 0;
            }
            std::uint64_t right_min = height;
            k = j;
            while (k + 1 < n && c[k + 1] <= height)
            {
                ++k;
                right_min = std::min(right_min, c[k]);
            }
            if (k + 1 == n)
            {
                right_min = 0;
            }
            std::uint64_t const prominence
                = height - std::max(left_min, right_min);
            if (static_cast<double>(prominence) >= floor)
            {
                Peak p;
                p.index = (i + j) / 2;
                p.center = 0.5 * (h.bin_center(i) + h.bin_center(j));
                p.height = height;
                p.prominence = prominence;
                result.peaks.push_back(p);
            }
        }
        i = j + 1;
    }
    return result;
}

//! Center of the first (lowest-ToT) peak of a ToT spectrum
inline double single_photon_tot(Histogram const& tot_hist,
                                double min_prominence = default_min_prominence)
{
    auto const peaks = find_peaks(tot_hist, min_prominence);
    validate<NotFound>(!peaks.empty(), "ToT spectrum has no peak");
    return peaks.peaks.front().center;
}

//---------------------------------------------------------------------------//
// FWHM
//---------------------------------------------------------------------------//
enum class FwhmMethod
{
    interpolated,
    gaussian_fit,
};

inline char const* to_cstring(FwhmMethod m)
{
    return m == FwhmMethod::interpolated ? "interpolated" : "gaussian_fit";
}

inline FwhmMethod fwhm_method_from_string(std::string const& s)
{
    if (s == "interpolated")
    {
        return FwhmMethod::interpolated;
    }
    if (s == "gaussian_fit")
    {
        return FwhmMethod::gaussian_fit;
    }
    throw InvalidArgument("unknown FWHM method '" + s
                          + "' (expected interpolated or gaussian_fit)");
}

struct SptrResult
{
    double fwhm{0};  //!< [histogram x units]
    double peak_center{0};
    FwhmMethod method{FwhmMethod::interpolated};
    std::uint64_t n_events{0};
};

namespace detail
{
//---------------------------------------------------------------------------//
struct HalfMaxCrossings
{
    std::size_t mode{0};
    double left{0};
    double right{0};
};

inline HalfMaxCrossings half_max_crossings(Histogram const& h)
{
    auto const& c = h.counts;
    auto const mode = static_cast<std::size_t>(
        std::max_element(c.begin(), c.end()) - c.begin());
    double const half = 0.5 * static_cast<double>(c[mode]);

    auto interp = [&](std::size_t below, std::size_t above) {
        double const nb = static_cast<double>(c[below]);
        double const na = static_cast<double>(c[above]);
        double const cb = h.bin_center(below);
        double const ca = h.bin_center(above);
        return cb + (half - nb) / (na - nb) * (ca - cb);
    };

    HalfMaxCrossings x;
    x.mode = mode;
    std::size_t k = mode;
    while (k > 0 && static_cast<double>(c[k]) >= half)
    {
        --k;
    }
    validate<UnboundedPeak>(static_cast<double>(c[k]) < half,
                            "left flank never drops below half maximum");
    x.left = interp(k, k + 1);

    k = mode;
    while (k + 1 < c.size() && static_cast<double>(c[k]) >= half)
    {
        ++k;
    }
    validate<UnboundedPeak>(static_cast<double>(c[k]) < half,
                            "right flank never drops below half maximum");
    x.right = interp(k, k - 1);
    return x;
}

//! Least-squares gaussian A exp(-(x - mu)^2 / (2 sigma^2)) over binned data
struct GaussianProblem
{
    std::vector<double> x;
    std::vector<double> y;

    Eigen::VectorXd residuals(Eigen::Vector3d const& p) const
    {
        Eigen::VectorXd r(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            double const z = (x[i] - p[1]) / p[2];
            r[i] = y[i] - p[0] * std::exp(-0.5 * z * z);
        }
        return r;
    }

    Eigen::Matrix<double, Eigen::Dynamic, 3>
    model_jacobian(Eigen::Vector3d const& p) const
    {
        Eigen::Matrix<double, Eigen::Dynamic, 3> j(x.size(), 3);
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            double const z = (x[i] - p[1]) / p[2];
            double const g = std::exp(-0.5 * z * z);
            j(i, 0) = g;
            j(i, 1) = p[0] * g * z / p[2];
            j(i, 2) = p[0] * g * z * z / p[2];
        }
        return j;
    }

    bool in_domain(Eigen::Vector3d const& p) const
    {
        return p[0] > 0 && p[2] > 0 && p.allFinite();
    }
};

//---------------------------------------------------------------------------//
}  // namespace detail

/*!
 * Full width at half maximum around the global mode.
 *
 * Interpolated: linear interpolation between bin centers at the half-max
 * crossing on each flank. GaussianFit: least-squares gaussian over the
 * contiguous region around the mode above 5 % of the maximum, FWHM = 2.3548
 * sigma. Throws \c UnboundedPeak if a flank stays above half maximum to the
 * histogram edge.
 */
inline SptrResult fwhm(Histogram const& h,
                       FwhmMethod method = FwhmMethod::interpolated)
{
    validate<EmptyInput>(!h.empty() && h.max_count() > 0,
                         "cannot measure FWHM of an empty histogram");
    SptrResult result;
    result.method = method;
    result.n_events = h.total();

    auto const x = detail::half_max_crossings(h);
    if (method == FwhmMethod::interpolated)
    {
        result.fwhm = x.right - x.left;
        result.peak_center = h.bin_center(x.mode);
        return result;
    }

    auto const& c = h.counts;
    double const cut = 0.05 * static_cast<double>(c[x.mode]);
    std::size_t lo = x.mode;
    std::size_t hi = x.mode;
    while (lo > 0 && static_cast<double>(c[lo - 1]) >= cut)
    {
        --lo;
    }
    while (hi + 1 < c.size() && static_cast<double>(c[hi + 1]) >= cut)
    {
        ++hi;
    }
    detail::GaussianProblem problem;
    double sum = 0;
    double mean = 0;
    for (std::size_t i = lo; i <= hi; ++i)
    {
        problem.x.push_back(h.bin_center(i));
        problem.y.push_back(static_cast<double>(c[i]));
        sum += problem.y.back();
        mean += problem.y.back() * problem.x.back();
    }
    validate<FitFailed>(problem.x.size() >= 3,
                        "too few bins around the mode for a gaussian fit");
    mean /= sum;
    Eigen::Vector3d p0(static_cast<double>(c[x.mode]),
                       mean,
                       fwhm_to_sigma(x.right - x.left));
    auto const fit = levenberg_marquardt<3>(problem, p0);
    result.fwhm = sigma_to_fwhm(std::abs(fit.params[2]));
    result.peak_center = fit.params[1];
    return result;
}

//---------------------------------------------------------------------------//
// DARK RATE
//---------------------------------------------------------------------------//
//! z = (observed - lambda t) / sqrt(lambda t)
inline double verify_dark_rate(std::uint64_t observed,
                               SipmConfig const& cfg,
                               double duration)
{
    validate(duration > 0, "duration must be positive");
    double const expected = expected_dark_count(cfg, duration);
    double const diff = static_cast<double>(observed) - expected;
    if (!(expected > 0))
    {
        return diff == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return diff / std::sqrt(expected);
}

//---------------------------------------------------------------------------//
// THRESHOLD SCAN
//---------------------------------------------------------------------------//
struct ThresholdScanOptions
{
    double min_prominence{default_min_prominence};
    //! Allowed upward drift of the first peak [ToT bins]
    double tot_tolerance_bins{2};
    //! The spectrum must keep this fraction of the reference hit count
    double min_count_fraction{0.5};
    //! Single-photon ToT from dark calibration; defaults to the first step
    std::optional<double> reference_tot;
    std::optional<std::uint64_t> reference_count;
};

struct ThresholdScanStep
{
    double threshold{0};
    bool single_photon_present{false};
    std::optional<double> first_peak_tot;
    std::uint64_t count{0};
};

struct ThresholdScanResult
{
    double max_threshold{0};
    std::vector<ThresholdScanStep> steps;
};

/*!
 * Raise the threshold until the single-SPAD peak disappears.
 *
 * \p harness maps a threshold to the ToT spectrum acquired at it. A step
 * still shows the single-photon peak when a first peak exists, it has not
 * jumped more than the tolerance above the reference ToT (replacement by a
 * multi-SPAD peak), and the hit count has not collapsed below the reference
 * fraction. Downward drift of the peak is expected as the threshold nears
 * the single-photon amplitude and is accepted. Returns the last threshold
 * before the first failing step.
 */
template<class Harness>
ThresholdScanResult threshold_scan(Harness&& harness,
                                   std::span<double const> thresholds,
                                   ThresholdScanOptions const& opts = {})
{
    validate(!thresholds.empty(), "threshold scan needs thresholds");
    validate(std::is_sorted(thresholds.begin(), thresholds.end()),
             "thresholds must be ascending");

    ThresholdScanResult result;
    std::optional<double> ref_tot = opts.reference_tot;
    std::optional<std::uint64_t> ref_count = opts.reference_count;
    bool found = false;

    for (double thr : thresholds)
    {
        Histogram const h = harness(thr);
        ThresholdScanStep step;
        step.threshold = thr;
        step.count = h.total();
        if (step.count > 0)
        {
            auto const peaks = find_peaks(h, opts.min_prominence);
            if (!peaks.empty())
            {
                step.first_peak_tot = peaks.peaks.front().center;
            }
        }
        if (step.first_peak_tot)
        {
            if (!ref_tot)
            {
                ref_tot = step.first_peak_tot;
            }
            if (!ref_count)
            {
                ref_count = step.count;
            }
            double const bin = h.bin_width(0);
            bool const not_replaced
                = *step.first_peak_tot
                  <= *ref_tot + opts.tot_tolerance_bins * bin;
            bool const not_dropped
                = static_cast<double>(step.count)
                  >= opts.min_count_fraction * static_cast<double>(*ref_count);
            step.single_photon_present = not_replaced && not_dropped;
        }
        result.steps.push_back(step);
        if (!step.single_photon_present)
        {
            break;
        }
        result.max_threshold = thr;
        found = true;
    }
    validate<NotFound>(found,
                       "no threshold shows a single-photon ToT peak");
    return result;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
