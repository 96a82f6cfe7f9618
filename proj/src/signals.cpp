#include "piesn/signals.hpp"

namespace piesn {

namespace {

void validate_spec(const SignalSpec& spec) {
    if (spec.amplitude.empty()) throw ConfigError("signal: no channels");
    if (spec.hold_min < 1) throw ConfigError("signal: hold_min must be >= 1");
    if (spec.hold_max < spec.hold_min) throw ConfigError("signal: hold range is inverted");
    for (const auto& r : spec.amplitude)
        if (!(r.lo <= r.hi)) throw ConfigError("signal: amplitude bounds out of order");
}

}  // namespace

Matrix generate_signal(const SignalSpec& spec, int length) {
    validate_spec(spec);
    if (length < 0) throw ConfigError("signal: negative length");
    const int channels = static_cast<int>(spec.amplitude.size());
    Matrix out(length, channels);
    for (int ch = 0; ch < channels; ++ch) {
        // Independent stream per channel, offset by a fixed odd constant so
        // channels decorrelate for any base seed.
        Rng rng(spec.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(ch + 1));
        const auto [lo, hi] = spec.amplitude[ch];
        bool level_hi = rng.uniform() < 0.5;  // PRBS start level
        int t = 0;
        while (t < length) {
            const int hold = rng.uniform_int(spec.hold_min, spec.hold_max);
            double value;
            if (spec.kind == SignalKind::aprbs) {
                value = rng.uniform(lo, hi);
            } else {
                value = level_hi ? hi : lo;
                level_hi = !level_hi;
            }
            for (int k = 0; k < hold && t < length; ++k, ++t) out(t, ch) = value;
        }
    }
    return out;
}

Matrix gen_aprbs(SignalSpec spec, int length) {
    spec.kind = SignalKind::aprbs;
    return generate_signal(spec, length);
}

Matrix gen_prbs(SignalSpec spec, int length) {
    spec.kind = SignalKind::prbs;
    return generate_signal(spec, length);
}

}  // namespace piesn
