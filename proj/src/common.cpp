#include "piesn/common.hpp"

#include <cstdio>

namespace piesn {

std::string format_double(double v) {
    // %.17g always round-trips binary64; try shorter forms first so CSVs
    // stay readable where exactness allows.
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v || (v != v && back != back)) return buf;
    }
    return buf;
}

}  // namespace piesn
