#pragma once

#include "piesn/common.hpp"

#include <cstdint>
#include <vector>

namespace piesn {

enum class SignalKind { aprbs, prbs };

struct ChannelRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Piecewise-constant excitation. Hold durations are drawn uniformly from
/// [hold_min, hold_max] steps; APRBS draws each plateau amplitude uniformly
/// from the channel range, PRBS alternates between the two range endpoints.
/// Channels are generated from independent seeded streams.
struct SignalSpec {
    SignalKind kind = SignalKind::aprbs;
    std::vector<ChannelRange> amplitude;  // one per channel
    int hold_min = 1;
    int hold_max = 1;
    std::uint64_t seed = 0;
};

Matrix generate_signal(const SignalSpec& spec, int length);  // length x channels

Matrix gen_aprbs(SignalSpec spec, int length);
Matrix gen_prbs(SignalSpec spec, int length);

}  // namespace piesn
