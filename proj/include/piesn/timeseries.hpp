#pragma once

#include "piesn/common.hpp"

#include <string>
#include <vector>

namespace piesn {

/// Uniformly sampled multichannel record: one input row and one state row
/// per step. Row n of `states` is the plant state at step n; row n of
/// `inputs` is the input applied over [n, n+1).
struct TimeSeries {
    double dt = 1.0;
    std::vector<std::string> input_names;
    std::vector<std::string> state_names;
    Matrix inputs;  // T x n_u
    Matrix states;  // T x n_y

    int length() const { return static_cast<int>(states.rows()); }
    int n_u() const { return static_cast<int>(inputs.cols()); }
    int n_y() const { return static_cast<int>(states.cols()); }
};

/// CSV layout: header `time,<inputs...>,<states...>`, one row per step,
/// doubles written in shortest round-trip form.
void write_timeseries_csv(const TimeSeries& ts, const std::string& path);

/// Reads a CSV produced by write_timeseries_csv. Column roles are recovered
/// from the supplied name lists (normally taken from the metadata sidecar).
TimeSeries read_timeseries_csv(const std::string& path,
                               const std::vector<std::string>& input_names,
                               const std::vector<std::string>& state_names);

}  // namespace piesn
