//----------------------------------*-C++-*----------------------------------//
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file sipmtwin/core/Format.hh
//---------------------------------------------------------------------------//
#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace sipmtwin
{
//---------------------------------------------------------------------------//
//! Append the shortest round-trip decimal form of \p v ("inf"/"nan" as text)
inline void append_number(std::string& out, double v)
{
    if (std::isnan(v))
    {
        out += "nan";
        return;
    }
    if (std::isinf(v))
    {
        out += v > 0 ? "inf" : "-inf";
        return;
    }
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, r.ptr);
}

inline std::string format_number(double v)
{
    std::string s;
    append_number(s, v);
    return s;
}

//---------------------------------------------------------------------------//
}  // namespace sipmtwin
