#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace piesn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A rollout or simulation left the admissible region; carries the offending step.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, int step) : Error(msg), step(step) {}
    int step = -1;
};

/// Training gave up after the retry policy was exhausted (CLI exit code 4).
class InstabilityError : public Error {
public:
    using Error::Error;
};

/// Label-hygiene guard: withheld labels were requested through a training path.
class GuardError : public Error {
public:
    using Error::Error;
};

class NumericsError : public Error {
public:
    using Error::Error;
};

/// Deterministic RNG. Doubles are derived from the raw 64-bit stream with a
/// fixed bit mapping so sequences are reproducible independent of the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive, rejection-sampled so the
    /// sequence stays exact for any range.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return lo + static_cast<int>(v % span);
    }

private:
    std::mt19937_64 gen_;
};

/// Shortest text form that round-trips a double exactly; used by every CSV
/// writer so reruns are byte-identical.
std::string format_double(double v);

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace piesn
