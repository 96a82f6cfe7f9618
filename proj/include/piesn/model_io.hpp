#pragma once

#include "piesn/reservoir.hpp"
#include "piesn/training.hpp"

#include <optional>
#include <string>

namespace piesn {

/// A trained model as persisted to disk: weights, config echo, and the
/// adaptive-loss state when physics refinement ran.
struct ModelFile {
    Reservoir reservoir;
    Readout readout;
    std::optional<AdaptiveLossState> adaptive;
};

/// Structured text (JSON) model file: matrices row-major, config echoed with
/// the seed, doubles in round-trip form so reload + retrain is bit-identical
/// to an uninterrupted run.
void save_model(const ModelFile& m, const std::string& path);
ModelFile load_model(const std::string& path);

}  // namespace piesn
