#include "piesn/commands.hpp"

#include "piesn/config.hpp"
#include "piesn/experiments.hpp"
#include "piesn/harness.hpp"
#include "piesn/model_io.hpp"
#include "piesn/simulate.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

namespace piesn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Timestamps are confined to this log so every other artifact is
// byte-reproducible.
void log_line(const std::string& outdir, const std::string& msg) {
    std::ofstream log(outdir + "/run.log", std::ios::app);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%F %T", std::gmtime(&now));
    log << buf << " " << msg << '\n';
    std::cerr << msg << '\n';
}

std::string resolve(const std::string& config_path, const std::string& p) {
    fs::path fp(p);
    if (fp.is_absolute()) return p;
    return (fs::path(config_path).parent_path() / fp).string();
}

json config_with_overrides(const std::string& config_path, const json* overrides) {
    json cfg = load_config(config_path);
    if (overrides)
        for (auto it = overrides->begin(); it != overrides->end(); ++it) cfg[it.key()] = it.value();
    validate_config(cfg);
    return cfg;
}

struct ThresholdReport {
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

double mean_of(const ExperimentResult& r, const std::string& arch, double setting, bool test) {
    for (const auto& a : r.aggregates)
        if (a.architecture == arch && a.setting == setting)
            return test ? a.test_mean : a.colloc_mean;
    return std::numeric_limits<double>::quiet_NaN();
}

ThresholdReport check_suite_thresholds(const ExperimentResult& r, const json& th) {
    ThresholdReport rep;
    auto fail = [&](const std::string& m) { rep.failures.push_back(m); };

    if (th.value("require_ordering", false)) {
        // Architecture ordering on mean test MSE: pi-esn-a < pi-esn-i < esn.
        const double a = mean_of(r, "pi-esn-a", 0, true);
        const double i = mean_of(r, "pi-esn-i", 0, true);
        const double e = mean_of(r, "esn", 0, true);
        if (!(a < i && i < e))
            fail("architecture ordering violated: pi-esn-a=" + std::to_string(a) +
                 " pi-esn-i=" + std::to_string(i) + " esn=" + std::to_string(e));
    }
    if (th.contains("min_reduction")) {
        // Relative reduction of pi-esn-a over esn at every setting present.
        const double need = th.at("min_reduction").get<double>();
        const bool both = th.value("reduction_on_both", false);
        std::set<double> settings;
        for (const auto& a : r.aggregates) settings.insert(a.setting);
        for (double s : settings) {
            const double e_t = mean_of(r, "esn", s, true);
            const double a_t = mean_of(r, "pi-esn-a", s, true);
            if (!(a_t <= (1.0 - need) * e_t))
                fail("test reduction below " + std::to_string(need) + " at setting " +
                     std::to_string(s) + ": esn=" + std::to_string(e_t) +
                     " pi-esn-a=" + std::to_string(a_t));
            if (both) {
                const double e_c = mean_of(r, "esn", s, false);
                const double a_c = mean_of(r, "pi-esn-a", s, false);
                if (!(a_c <= (1.0 - need) * e_c))
                    fail("collocation reduction below " + std::to_string(need) + " at setting " +
                         std::to_string(s));
            }
        }
    }
    if (th.value("require_improvement", false)) {
        std::set<double> settings;
        for (const auto& a : r.aggregates) settings.insert(a.setting);
        for (double s : settings) {
            const double e_t = mean_of(r, "esn", s, true);
            const double a_t = mean_of(r, "pi-esn-a", s, true);
            if (!(a_t < e_t))
                fail("pi-esn-a does not beat esn at setting " + std::to_string(s));
        }
    }
    if (th.contains("majority_settings")) {
        // Per listed setting, pi-esn-a must beat esn on a majority of seeds.
        for (const auto& sj : th.at("majority_settings")) {
            const double s = sj.get<double>();
            int wins = 0, total = 0;
            for (const auto& run : r.runs) {
                if (run.setting != s || run.architecture != "pi-esn-a" || run.excluded) continue;
                for (const auto& base : r.runs) {
                    if (base.setting == s && base.architecture == "esn" &&
                        base.signal_seed == run.signal_seed && !base.excluded) {
                        ++total;
                        if (run.test_mse < base.test_mse) ++wins;
                    }
                }
            }
            if (!(total > 0 && 2 * wins > total))
                fail("no majority win at setting " + std::to_string(s) + " (" +
                     std::to_string(wins) + "/" + std::to_string(total) + ")");
        }
    }
    if (th.contains("max_ratio")) {
        const double need = th.at("max_ratio").get<double>();
        const double e_t = mean_of(r, "esn", 0, true);
        const double a_t = mean_of(r, "pi-esn-a", 0, true);
        if (!(a_t <= need * e_t))
            fail("test MSE ratio above " + std::to_string(need) + ": esn=" + std::to_string(e_t) +
                 " pi-esn-a=" + std::to_string(a_t));
    }
    if (th.value("require_iae_ordering", false)) {
        double iae_esn = -1, iae_pi = -1;
        for (const auto& run : r.runs) {
            if (run.architecture == "esn") iae_esn = run.colloc_mse;
            if (run.architecture == "pi-esn-a") iae_pi = run.colloc_mse;
        }
        if (!(iae_pi >= 0 && iae_esn >= 0 && iae_pi < iae_esn))
            fail("IAE ordering violated: pi-esn-a=" + std::to_string(iae_pi) +
                 " esn=" + std::to_string(iae_esn));
    }
    if (th.contains("max_kkt")) {
        const double need = th.at("max_kkt").get<double>();
        for (const auto& t : r.tables)
            if (t.name == "iae")
                for (int row = 0; row < t.rows.rows(); ++row)
                    if (!(t.rows(row, 1) < need))
                        fail("KKT residual above " + std::to_string(need) + " for " +
                             t.row_labels[row]);
    }
    return rep;
}

thread_local std::string g_command_error;

int guarded(const std::string& outdir, const std::function<int()>& body) {
    g_command_error.clear();
    int code = exit_ok;
    try {
        fs::create_directories(outdir);
        return body();
    } catch (const ConfigError& e) {
        g_command_error = std::string("config error: ") + e.what();
        code = exit_config;
    } catch (const InstabilityError& e) {
        g_command_error = std::string("numerical instability: ") + e.what();
        code = exit_instability;
    } catch (const std::exception& e) {
        g_command_error = std::string("error: ") + e.what();
        code = exit_error;
    }
    log_line(outdir, g_command_error);
    return code;
}

int simulate_impl(const json& cfg, const std::string& config_path, const std::string& outdir) {
    const auto sys = parse_system(cfg);
    const json& s = cfg.at("system");
    const double dt = s.value("dt", 1.0);
    Vector y0 = s.contains("y0") ? parse_vector(s.at("y0"), "system.y0")
                                 : Vector::Zero(sys->dim_y());
    if (y0.size() != sys->dim_y()) throw ConfigError("system.y0: wrong dimension");
    const SplitSpec split = parse_split(cfg);
    const SignalSpec sig = parse_signal(cfg, sys->dim_u(), cfg.value("seed", 42ull));
    const bool normalize = cfg.value("normalize", false);

    const Dataset ds = make_dataset(*sys, sig, split, dt, y0, normalize);
    ds.save(outdir + "/data.csv");
    log_line(outdir, "simulate: wrote " + std::to_string(ds.raw().length()) + " rows (" +
                         sys->name() + ") to " + outdir + "/data.csv");
    (void)config_path;
    return exit_ok;
}

int train_impl(const json& cfg, const std::string& config_path, const std::string& outdir) {
    if (!cfg.contains("dataset")) throw ConfigError("config: missing 'dataset' path");
    const Dataset ds = Dataset::load(resolve(config_path, cfg.at("dataset").get<std::string>()));
    const auto sys = parse_system(cfg);
    if (sys->dim_y() != ds.raw().n_y() || sys->dim_u() != ds.raw().n_u())
        throw ConfigError("system dimensions do not match the dataset");

    ReservoirConfig rc = parse_reservoir(cfg, ds.raw().n_u(), ds.raw().n_y());
    PiTrainConfig tc = parse_training(cfg);

    const std::string mode = cfg.value("mode", "");
    if (mode == "esn-only")
        tc.skip_physics = true;
    else if (mode == "pi-fixed")
        tc.mode = BalanceMode::fixed;
    else if (mode == "pi-adaptive")
        tc.mode = BalanceMode::adaptive;
    else if (!mode.empty())
        throw ConfigError("mode: expected esn-only, pi-fixed or pi-adaptive");

    if (cfg.contains("grid")) {
        GridSpec gs;
        const json& g = cfg.at("grid");
        gs.delta_in = g.value("delta_in", std::vector<double>{});
        gs.delta_fb = g.value("delta_fb", std::vector<double>{});
        gs.gamma = g.value("gamma", std::vector<double>{});
        gs.alpha = g.value("alpha", std::vector<double>{});
        gs.rho = g.value("rho", std::vector<double>{});
        const GridResult gr = grid_search(rc, ds, gs);
        rc = gr.best_cfg;
        tc.ridge.gamma = gr.best.gamma;
        log_line(outdir, "grid: delta_in=" + std::to_string(gr.best.delta_in) + " delta_fb=" +
                             std::to_string(gr.best.delta_fb) + " gamma=" +
                             std::to_string(gr.best.gamma) + " val_mse=" +
                             std::to_string(gr.best.val_mse));
    }

    const Reservoir res = init_reservoir(rc);
    const int warm = cfg.value("warmup", -1);
    EvalHook hook = [&](const Readout& ro) {
        const EvalOutcome ev = evaluate_mse(res, ro, ds, warm);
        return std::make_pair(ev.colloc_mse, ev.test_mse);
    };
    const TrainResult tr = train_pi_esn(res, ds.train_view(), *sys, tc, hook);

    ModelFile mf;
    mf.reservoir = res;
    mf.readout = tr.readout;
    if (!tc.skip_physics) mf.adaptive = tr.s;
    save_model(mf, outdir + "/model.json");
    ModelFile base;
    base.reservoir = res;
    base.readout = tr.pretrained;
    save_model(base, outdir + "/model_pretrained.json");
    tr.report.write_csv(outdir + "/train_report.csv");

    const EvalOutcome ev = evaluate_mse(res, tr.readout, ds, warm);
    log_line(outdir, "train: colloc_mse=" + std::to_string(ev.colloc_mse) + " test_mse=" +
                         std::to_string(ev.test_mse) + " retries=" + std::to_string(tr.report.retries));
    return exit_ok;
}

int evaluate_impl(const json& cfg, const std::string& config_path, const std::string& outdir) {
    if (!cfg.contains("dataset")) throw ConfigError("config: missing 'dataset' path");
    if (!cfg.contains("model")) throw ConfigError("config: missing 'model' path");
    const Dataset ds = Dataset::load(resolve(config_path, cfg.at("dataset").get<std::string>()));
    const ModelFile mf = load_model(resolve(config_path, cfg.at("model").get<std::string>()));
    const int warm = cfg.value("warmup", -1);

    const EvalOutcome ev = evaluate_mse(mf.reservoir, mf.readout, ds, warm);
    {
        std::ofstream out(outdir + "/metrics.csv");
        out << "colloc_mse,test_mse,unstable\n"
            << format_double(ev.colloc_mse) << ',' << format_double(ev.test_mse) << ','
            << (ev.unstable ? 1 : 0) << '\n';
    }
    log_line(outdir, "evaluate: colloc_mse=" + std::to_string(ev.colloc_mse) + " test_mse=" +
                         std::to_string(ev.test_mse));
    if (ev.unstable) return exit_instability;
    if (cfg.contains("thresholds")) {
        const json& th = cfg.at("thresholds");
        if (th.contains("max_test_mse") && !(ev.test_mse <= th.at("max_test_mse").get<double>()))
            return exit_acceptance;
        if (th.contains("max_colloc_mse") &&
            !(ev.colloc_mse <= th.at("max_colloc_mse").get<double>()))
            return exit_acceptance;
    }
    return exit_ok;
}

int mpc_impl(const json& cfg, const std::string& config_path, const std::string& outdir) {
    const auto plant = parse_system(cfg);
    if (!cfg.contains("models")) throw ConfigError("config: missing 'models' list");
    const MpcConfig mc = parse_mpc(cfg, plant->dim_u());
    if (!cfg.contains("scenario")) throw ConfigError("config: missing 'scenario' section");
    const json& sc = cfg.at("scenario");

    const int steps = sc.value("steps", 600);
    const int n_yc = static_cast<int>(mc.controlled.size());
    if (!sc.contains("refs")) throw ConfigError("scenario.refs: required");
    Matrix refs(steps, n_yc);
    {
        // refs: list of {"until": k, "values": [...]} segments in order.
        int row = 0;
        for (const auto& seg : sc.at("refs")) {
            const int until = std::min(steps, seg.at("until").get<int>());
            const Vector v = parse_vector(seg.at("values"), "scenario.refs.values");
            if (v.size() != n_yc) throw ConfigError("scenario.refs.values: wrong dimension");
            for (; row < until; ++row) refs.row(row) = v.transpose();
        }
        for (; row < steps; ++row) refs.row(row) = refs.row(row - 1);
    }

    DisturbanceSpec dist;
    dist.at_step = sc.value("disturbance_step", -1);
    if (sc.contains("output_offset"))
        dist.output_offset = parse_vector(sc.at("output_offset"), "scenario.output_offset");
    if (sc.contains("state_offset"))
        dist.state_offset = parse_vector(sc.at("state_offset"), "scenario.state_offset");

    const json& s = cfg.at("system");
    const double dt = s.value("dt", 1.0);
    Vector y0 = sc.contains("y0") ? parse_vector(sc.at("y0"), "scenario.y0")
                                  : Vector::Constant(plant->dim_y(), 2.0);

    const int prefix = sc.value("prefix_steps", 100);
    Vector u_hold = sc.contains("u_hold") ? parse_vector(sc.at("u_hold"), "scenario.u_hold")
                                          : Vector::Constant(plant->dim_u(), 3.0);
    Matrix prefix_inputs(std::max(prefix, 1), plant->dim_u());
    for (int k = 0; k < prefix_inputs.rows(); ++k) prefix_inputs.row(k) = u_hold.transpose();
    const Matrix prefix_traj = simulate_euler(*plant, y0, prefix_inputs, dt);
    const Vector y_start = prefix_traj.row(prefix_inputs.rows() - 1).transpose();

    std::ofstream iae_out(outdir + "/iae.csv");
    iae_out << "model,iae,max_kkt,relaxed\n";
    std::vector<std::pair<std::string, double>> iaes;
    for (const auto& m : cfg.at("models")) {
        const std::string name = m.at("name").get<std::string>();
        const ModelFile mf = load_model(resolve(config_path, m.at("path").get<std::string>()));
        PnmpcController ctrl(mf.reservoir, mf.readout, mc);
        ctrl.reset(prefix_inputs, prefix_traj, u_hold);
        const ClosedLoopResult loop = closed_loop(*plant, y_start, ctrl, refs, dist, steps, dt);

        std::ofstream lout(outdir + "/loop-" + name + ".csv");
        for (size_t i = 0; i < loop.log_header.size(); ++i)
            lout << (i ? "," : "") << loop.log_header[i];
        lout << '\n';
        for (int r = 0; r < loop.log.rows(); ++r) {
            for (int c = 0; c < loop.log.cols(); ++c)
                lout << (c ? "," : "") << format_double(loop.log(r, c));
            lout << '\n';
        }
        iae_out << name << ',' << format_double(loop.iae) << ',' << format_double(loop.max_kkt)
                << ',' << (loop.relaxed_any ? 1 : 0) << '\n';
        iaes.emplace_back(name, loop.iae);
        log_line(outdir, "mpc: " + name + " iae=" + std::to_string(loop.iae) + " max_kkt=" +
                             std::to_string(loop.max_kkt));
    }

    if (cfg.contains("thresholds")) {
        const json& th = cfg.at("thresholds");
        if (th.contains("iae_order")) {
            // IAE must be strictly increasing in the listed model order.
            double prev = -1;
            for (const auto& nj : th.at("iae_order")) {
                const std::string n = nj.get<std::string>();
                double v = -1;
                for (const auto& [name, iae] : iaes)
                    if (name == n) v = iae;
                if (v < 0) throw ConfigError("thresholds.iae_order: unknown model " + n);
                if (prev >= 0 && !(prev < v)) return exit_acceptance;
                prev = v;
            }
        }
    }
    return exit_ok;
}

int suite_impl(const json& cfg, const std::string& config_path, const std::string& outdir) {
    if (!cfg.contains("suite")) throw ConfigError("config: missing 'suite' name");
    const std::string name = cfg.at("suite").get<std::string>();
    const json exp_cfg = cfg.contains("experiment") ? cfg.at("experiment") : json::object();
    json merged = exp_cfg;
    if (!merged.contains("seed") && cfg.contains("seed")) merged["seed"] = cfg.at("seed");

    const ExperimentResult result = run_suite(name, merged);
    result.write_csv(outdir);

    int total_excluded = 0;
    for (const auto& r : result.runs) total_excluded += r.excluded ? 1 : 0;
    log_line(outdir, "suite " + name + ": " + std::to_string(result.runs.size()) + " runs, " +
                         std::to_string(total_excluded) + " excluded");

    if (cfg.contains("thresholds")) {
        const ThresholdReport rep = check_suite_thresholds(result, cfg.at("thresholds"));
        for (const auto& f : rep.failures) log_line(outdir, "threshold: " + f);
        if (!rep.ok()) return exit_acceptance;
    }
    (void)config_path;
    return exit_ok;
}

int dispatch(const std::string& command, const std::string& config_path,
             const std::string& output_dir, const json* overrides) {
    return guarded(output_dir, [&]() -> int {
        const json cfg = config_with_overrides(config_path, overrides);
        if (command == "simulate") return simulate_impl(cfg, config_path, output_dir);
        if (command == "train") return train_impl(cfg, config_path, output_dir);
        if (command == "evaluate") return evaluate_impl(cfg, config_path, output_dir);
        if (command == "mpc") return mpc_impl(cfg, config_path, output_dir);
        if (command == "suite") return suite_impl(cfg, config_path, output_dir);
        throw ConfigError("unknown command '" + command +
                          "' (expected simulate, train, evaluate, mpc, suite)");
    });
}

}  // namespace

int cmd_simulate(const std::string& c, const std::string& o) { return dispatch("simulate", c, o, nullptr); }
int cmd_train(const std::string& c, const std::string& o) { return dispatch("train", c, o, nullptr); }
int cmd_evaluate(const std::string& c, const std::string& o) { return dispatch("evaluate", c, o, nullptr); }
int cmd_mpc(const std::string& c, const std::string& o) { return dispatch("mpc", c, o, nullptr); }
int cmd_suite(const std::string& c, const std::string& o) { return dispatch("suite", c, o, nullptr); }

int run_command(const std::string& command, const std::string& config_path,
                const std::string& output_dir) {
    return dispatch(command, config_path, output_dir, nullptr);
}

int run_command_overrides(const std::string& command, const std::string& config_path,
                          const std::string& output_dir, const std::string& overrides_json) {
    json ov;
    try {
        ov = json::parse(overrides_json);
    } catch (const json::exception& e) {
        g_command_error = std::string("override parse error: ") + e.what();
        std::cerr << g_command_error << '\n';
        return exit_config;
    }
    return dispatch(command, config_path, output_dir, &ov);
}

const std::string& last_command_error() { return g_command_error; }

}  // namespace piesn
