#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <system_error>

namespace dbleu {

/// Fixed-point rendering with `places` decimals. Never emits a negative zero.
inline std::string fixed(double x, int places) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", places, x);
    std::string s(buf);
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos)
        s.erase(0, 1);
    return s;
}

/// Shortest decimal that parses back to exactly `x`.
inline std::string shortest(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Rounds to `places` decimals; used where JSON output must be stable across
/// platforms whose libm may differ in the last ulp.
inline double rounded(double x, int places) {
    const double scale = std::pow(10.0, places);
    double r = std::round(x * scale) / scale;
    return r == 0.0 ? 0.0 : r;
}

} // namespace dbleu
