#include "piesn/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace piesn {

using nlohmann::json;

namespace {

// Allowed keys per section; nested objects validated recursively.
const std::set<std::string> kTop = {
    "seed",   "output_dir", "system",   "signal",  "split",      "reservoir", "ridge",
    "grid",   "training",   "normalize", "warmup", "mpc",        "experiment", "suite",
    "dataset", "model",     "models",    "scenario", "thresholds", "mode"};
const std::set<std::string> kSystem = {"name", "params", "dt", "y0"};
const std::set<std::string> kSignal = {"kind", "amplitude", "hold", "seed"};
const std::set<std::string> kSplit = {"train", "validation", "collocation", "test"};
const std::set<std::string> kReservoir = {"n_x", "alpha", "rho", "delta_in", "delta_fb",
                                          "delta_b", "seed"};
const std::set<std::string> kRidge = {"gamma"};
const std::set<std::string> kGrid = {"delta_in", "delta_fb", "gamma", "alpha", "rho"};
const std::set<std::string> kTraining = {"mode",     "m_outer", "k_inner", "optimizer",
                                         "lambda_data", "lambda_phy", "adam_lr", "adam_lr_decay",
                                         "blowup",   "max_retries", "s_init"};
const std::set<std::string> kMpc = {"horizon_y", "horizon_u", "q_weight", "r_weight", "b",
                                    "u_min", "u_max", "y_min", "y_max", "controlled",
                                    "soft_penalty"};
const std::set<std::string> kScenario = {"steps",  "refs", "disturbance_step", "state_offset",
                                         "output_offset", "prefix_steps", "u_hold", "y0"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(path + "." + it.key() + ": unknown key");
}

}  // namespace

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    validate_config(j);
    return j;
}

void validate_config(const json& cfg) {
    check_keys(cfg, kTop, "config");
    if (cfg.contains("system")) check_keys(cfg.at("system"), kSystem, "system");
    if (cfg.contains("signal")) check_keys(cfg.at("signal"), kSignal, "signal");
    if (cfg.contains("split")) check_keys(cfg.at("split"), kSplit, "split");
    if (cfg.contains("reservoir")) check_keys(cfg.at("reservoir"), kReservoir, "reservoir");
    if (cfg.contains("ridge")) check_keys(cfg.at("ridge"), kRidge, "ridge");
    if (cfg.contains("grid")) check_keys(cfg.at("grid"), kGrid, "grid");
    if (cfg.contains("training")) check_keys(cfg.at("training"), kTraining, "training");
    if (cfg.contains("mpc")) check_keys(cfg.at("mpc"), kMpc, "mpc");
    if (cfg.contains("scenario")) check_keys(cfg.at("scenario"), kScenario, "scenario");
    // experiment/thresholds sections are suite-specific free-form objects.
}

std::unique_ptr<OdeSystem> parse_system(const json& cfg) {
    if (!cfg.contains("system")) throw ConfigError("config: missing 'system' section");
    const json& s = cfg.at("system");
    if (!s.contains("name")) throw ConfigError("system.name: required");
    return make_system(s.at("name").get<std::string>(),
                       s.contains("params") ? s.at("params") : json());
}

SignalSpec parse_signal(const json& cfg, int channels, std::uint64_t default_seed) {
    if (!cfg.contains("signal")) throw ConfigError("config: missing 'signal' section");
    const json& s = cfg.at("signal");
    SignalSpec spec;
    const std::string kind = s.value("kind", "aprbs");
    if (kind == "aprbs")
        spec.kind = SignalKind::aprbs;
    else if (kind == "prbs")
        spec.kind = SignalKind::prbs;
    else
        throw ConfigError("signal.kind: expected aprbs or prbs");
    if (!s.contains("amplitude")) throw ConfigError("signal.amplitude: required");
    for (const auto& r : s.at("amplitude")) {
        if (!r.is_array() || r.size() != 2) throw ConfigError("signal.amplitude: expected [lo, hi] pairs");
        spec.amplitude.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    }
    if (static_cast<int>(spec.amplitude.size()) != channels)
        throw ConfigError("signal.amplitude: expected " + std::to_string(channels) + " channels");
    if (s.contains("hold")) {
        const json& h = s.at("hold");
        if (!h.is_array() || h.size() != 2) throw ConfigError("signal.hold: expected [min, max]");
        spec.hold_min = h.at(0).get<int>();
        spec.hold_max = h.at(1).get<int>();
    }
    spec.seed = s.value("seed", default_seed);
    return spec;
}

SplitSpec parse_split(const json& cfg) {
    if (!cfg.contains("split")) throw ConfigError("config: missing 'split' section");
    const json& s = cfg.at("split");
    SplitSpec split;
    split.n_te = s.value("train", 0);
    split.n_ve = s.value("validation", 0);
    split.n_f = s.value("collocation", 0);
    split.n_test = s.value("test", 0);
    split.validate();
    return split;
}

ReservoirConfig parse_reservoir(const json& cfg, int n_u, int n_y) {
    if (!cfg.contains("reservoir")) throw ConfigError("config: missing 'reservoir' section");
    const json& r = cfg.at("reservoir");
    ReservoirConfig rc;
    rc.n_x = r.value("n_x", 100);
    rc.n_u = n_u;
    rc.n_y = n_y;
    rc.alpha = r.value("alpha", 1.0);
    rc.rho_star = r.value("rho", 0.8);
    rc.delta_in = r.value("delta_in", 0.1);
    rc.delta_fb = r.value("delta_fb", 0.1);
    rc.delta_b = r.value("delta_b", 0.0);
    rc.seed = r.value("seed", cfg.value("seed", 42ull));
    rc.validate();
    return rc;
}

PiTrainConfig parse_training(const json& cfg) {
    PiTrainConfig tc;
    if (cfg.contains("ridge")) tc.ridge.gamma = cfg.at("ridge").value("gamma", tc.ridge.gamma);
    if (!cfg.contains("training")) return tc;
    const json& t = cfg.at("training");
    const std::string mode = t.value("mode", "adaptive");
    if (mode == "adaptive")
        tc.mode = BalanceMode::adaptive;
    else if (mode == "fixed")
        tc.mode = BalanceMode::fixed;
    else
        throw ConfigError("training.mode: expected adaptive or fixed");
    tc.m_outer = t.value("m_outer", tc.m_outer);
    tc.k_inner = t.value("k_inner", tc.k_inner);
    const std::string opt = t.value("optimizer", "lbfgs");
    if (opt == "lbfgs")
        tc.optimizer = OptimizerKind::lbfgs;
    else if (opt == "adam")
        tc.optimizer = OptimizerKind::adam;
    else
        throw ConfigError("training.optimizer: expected lbfgs or adam");
    tc.lambda_data = t.value("lambda_data", tc.lambda_data);
    tc.lambda_phy = t.value("lambda_phy", tc.lambda_phy);
    tc.adam.lr = t.value("adam_lr", tc.adam.lr);
    tc.adam_lr_decay = t.value("adam_lr_decay", tc.adam_lr_decay);
    tc.blowup = t.value("blowup", tc.blowup);
    tc.max_retries = t.value("max_retries", tc.max_retries);
    tc.s_init = t.value("s_init", tc.s_init);
    tc.validate();
    return tc;
}

Vector parse_vector(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array");
    Vector out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out(static_cast<int>(i)) = v.at(i).get<double>();
    return out;
}

MpcConfig parse_mpc(const json& cfg, int n_u) {
    if (!cfg.contains("mpc")) throw ConfigError("config: missing 'mpc' section");
    const json& m = cfg.at("mpc");
    MpcConfig mc;
    mc.horizon_y = m.value("horizon_y", 10);
    mc.horizon_u = m.value("horizon_u", 3);
    if (m.contains("controlled")) mc.controlled = m.at("controlled").get<std::vector<int>>();
    const int n_yc = static_cast<int>(mc.controlled.size());
    if (n_yc == 0) throw ConfigError("mpc.controlled: required (list of output indices)");
    auto weight = [&](const char* key, double dflt, int n) -> Vector {
        if (!m.contains(key)) return Vector::Constant(n, dflt);
        const json& w = m.at(key);
        if (w.is_number()) return Vector::Constant(n, w.get<double>());
        return parse_vector(w, std::string("mpc.") + key);
    };
    mc.q_weight = weight("q_weight", 5.0, n_yc);
    mc.r_weight = weight("r_weight", 1.0, n_u);
    mc.b_filter = m.value("b", 0.6);
    mc.u_min = weight("u_min", 0.0, n_u);
    mc.u_max = weight("u_max", 5.0, n_u);
    if (m.contains("y_min")) mc.y_min = weight("y_min", 0.0, n_yc);
    if (m.contains("y_max")) mc.y_max = weight("y_max", 0.0, n_yc);
    mc.soft_penalty = m.value("soft_penalty", mc.soft_penalty);
    return mc;
}

}  // namespace piesn
