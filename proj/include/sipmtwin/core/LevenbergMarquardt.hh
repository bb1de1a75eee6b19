//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/core/LevenbergMarquardt.hh
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "Error.hh"

namespace sipmtwin
{
//---------------------------------------------------------------------------//
struct LmOptions
{
    int max_iterations{200};
    //! Stop when |dS| / max(S, cost_floor) falls below this
    double relative_tolerance{1e-10};
    //! Denominator floor for the relative test (exact fits drive S to 0)
    double cost_floor{1e-30};
    double initial_damping{1e-3};
    double max_damping{1e16};
};

template<int N>
struct LmResult
{
    using Vector = Eigen::Matrix<double, N, 1>;

    Vector params;
    double initial_cost{0};
    double final_cost{0};
    int iterations{0};  //!< Accepted steps
    bool converged{false};
    std::vector<double> cost_history;  //!< S after each accepted step
};

//---------------------------------------------------------------------------//
/*!
 * Damped Gauss-Newton (Marquardt-scaled) minimization of S = |r|^2.
 *
 * The \c Problem supplies:
 * - \c residuals(p): observed minus model, an \c Eigen::VectorXd
 * - \c model_jacobian(p): d(model)/dp, rows per observation, N columns
 * - \c in_domain(p): false for parameters the model cannot evaluate
 *
 * Each iteration solves (J^T J + lambda diag(J^T J)) dp = J^T r. Steps that
 * leave the domain or fail to reduce S are rejected and the damping grows;
 * accepted steps shrink it. S is therefore non-increasing across accepted
 * steps. Throws \c FitFailed if the damped normal matrix is singular at
 * every damping level.
 */
template<int N, class Problem>
LmResult<N> levenberg_marquardt(Problem const& problem,
                                Eigen::Matrix<double, N, 1> params,
                                LmOptions const& opts = {})
{
    using Vector = Eigen::Matrix<double, N, 1>;
    using Matrix = Eigen::Matrix<double, N, N>;

    validate<DomainError>(problem.in_domain(params),
                          "initial parameters outside model domain");

    LmResult<N> result;
    Eigen::VectorXd r = problem.residuals(params);
    double cost = r.squaredNorm();
    result.initial_cost = cost;
    double lambda = opts.initial_damping;

    for (int iter = 0; iter < opts.max_iterations; ++iter)
    {
        auto const jac = problem.model_jacobian(params);
        Matrix const jtj = jac.transpose() * jac;
        Vector const gradient = jac.transpose() * r;

        bool accepted = false;
        bool factored_once = false;
        while (lambda <= opts.max_damping)
        {
            Matrix damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal();
            Eigen::LLT<Matrix> llt(damped);
            if (llt.info() != Eigen::Success)
            {
                lambda *= 10;
                continue;
            }
            factored_once = true;
            Vector const step = llt.solve(gradient);
            if (!step.allFinite())
            {
                lambda *= 10;
                continue;
            }

            // Stationary point: the step vanishes relative to the parameters
            if (step.norm() <= 1e-15 * (params.norm() + 1e-15))
            {
                result.converged = true;
                break;
            }

            Vector const trial = params + step;
            if (!problem.in_domain(trial))
            {
                lambda *= 10;
                continue;
            }
            Eigen::VectorXd trial_r = problem.residuals(trial);
            double const trial_cost = trial_r.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost < cost)
            {
                double const delta = cost - trial_cost;
                double const rel = delta / std::max(cost, opts.cost_floor);
                params = trial;
                r = std::move(trial_r);
                cost = trial_cost;
                lambda = std::max(lambda / 10, 1e-12);
                accepted = true;
                ++result.iterations;
                result.cost_history.push_back(cost);
                if (rel < opts.relative_tolerance)
                {
                    result.converged = true;
                }
                break;
            }
            lambda *= 10;
        }

        if (!factored_once)
        {
            throw FitFailed("normal equations singular at every damping "
                            "level after "
                            + std::to_string(result.iterations)
                            + " accepted steps (S = " + std::to_string(cost)
                            + ")");
        }
        if (!accepted && !result.converged)
        {
            // No damping level reduces S: local minimum to working precision
            result.converged = true;
        }
        if (result.converged)
        {
            break;
        }
    }

    result.params = params;
    result.final_cost = cost;
    return result;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
