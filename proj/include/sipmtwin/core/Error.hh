//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/core/Error.hh
//---------------------------------------------------------------------------//
#pragma once

#include <stdexcept>
#include <string>

namespace sipmtwin
{
//---------------------------------------------------------------------------//
// Error categories. Each maps onto a standard exception so callers that only
// care about "bad input" vs "runtime failure" can catch the std base.
//---------------------------------------------------------------------------//

//! A precondition or configuration invariant was violated
class InvalidArgument : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

//! A model was evaluated outside its mathematical domain
class DomainError : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

//! Input data was empty where content is required
class EmptyInput : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

//! A searched-for feature (peak, threshold) does not exist
class NotFound : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! Half-maximum crossing not reached inside the histogram
class UnboundedPeak : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! Iterative fit could not make progress
class FitFailed : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! Value outside the range an inverse map can represent
class OutOfRange : public std::out_of_range
{
  public:
    using std::out_of_range::out_of_range;
};

//! Quadratic inverse has no real root
class NoSolution : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

//! Ratio with a zero denominator
class UndefinedRatio : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

//---------------------------------------------------------------------------//
//! Throw \c E with \p message unless \p condition holds
template<class E = InvalidArgument>
inline void validate(bool condition, std::string const& message)
{
    if (!condition)
    {
        throw E(message);
    }
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
