//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/core/Random.hh
//---------------------------------------------------------------------------//
#pragma once

#include <cstdint>
#include <random>

namespace sipmtwin
{
//---------------------------------------------------------------------------//
using Engine = std::mt19937_64;

//---------------------------------------------------------------------------//
/*!
 * Independent random streams keyed by (seed, stream id).
 *
 * Every stochastic operation draws from an engine built by \c make_engine, so
 * a simulation split into independent pieces (per laser pulse, per event, per
 * trial) reproduces bit for bit no matter the order the pieces run in.
 * Stream ids are partitioned by a 16-bit tag so that subsystems never share
 * a stream by accident.
 */
enum class StreamTag : std::uint16_t
{
    generic = 0,
    dark,
    thinning,
    laser,
    transit,
    comparator,
    scintillation,
    xray,
    timing,
    trial,
    calibration,
};

//! SplitMix64 finalizer
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

//! Compose a stream id from a subsystem tag and a 48-bit index
constexpr std::uint64_t
stream_id(StreamTag tag, std::uint64_t index = 0)
{
    return (static_cast<std::uint64_t>(tag) << 48)
           | (index & 0x0000ffffffffffffULL);
}

//! Seed for the engine of a given (seed, stream) pair
constexpr std::uint64_t
stream_seed(std::uint64_t seed, std::uint64_t stream)
{
    return splitmix64(splitmix64(seed) ^ splitmix64(~stream));
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0)
{
    return Engine{stream_seed(seed, stream)};
}

inline Engine
make_engine(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0)
{
    return make_engine(seed, stream_id(tag, index));
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
