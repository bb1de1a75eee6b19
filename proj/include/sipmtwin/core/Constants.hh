//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/core/Constants.hh
//---------------------------------------------------------------------------//
#pragma once

#include <numbers>

namespace sipmtwin::constants
{
//---------------------------------------------------------------------------//
inline constexpr double pi = std::numbers::pi;
inline constexpr double ln2 = std::numbers::ln2;

//! Speed of light in vacuum [m/s]
inline constexpr double c_light = 2.99792458e8;

//! Elementary charge [C]
inline constexpr double e_charge = 1.602176634e-19;

//! FWHM / sigma for a gaussian, 2 sqrt(2 ln 2)
inline constexpr double fwhm_per_sigma = 2.3548200450309493;

//---------------------------------------------------------------------------//
}  // namespace sipmtwin::constants

namespace sipmtwin
{
//---------------------------------------------------------------------------//
inline constexpr double fwhm_to_sigma(double fwhm)
{
    return fwhm / constants::fwhm_per_sigma;
}

inline constexpr double sigma_to_fwhm(double sigma)
{
    return sigma * constants::fwhm_per_sigma;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
