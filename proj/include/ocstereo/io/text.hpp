#pragma once

#include <cstdio>
#include <string>

namespace ocstereo::io {

/// Shortest-ish round-trippable decimal for CSV/JSON/label output. snprintf
/// with a fixed precision keeps runs byte-identical regardless of locale-free
/// stream state.
inline std::string fmt_double(double v, int precision = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

inline std::string fmt_exact(double v) { return fmt_double(v, 17); }

}  // namespace ocstereo::io
