#include "piesn/experiments.hpp"

#include "piesn/simulate.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <iostream>

namespace piesn {

using nlohmann::json;

namespace {

std::uint64_t seed_of(const json& cfg) { return cfg.value("seed", 42ull); }
std::uint64_t reservoir_seed(std::uint64_t master, int i) { return master + 10000 + i; }
std::uint64_t signal_seed(std::uint64_t master, int i) { return master + 777 + i; }

struct VdpSetup {
    SignalSpec signal;
    SplitSpec split;
    double dt = 0.03;
    Vector y0;
    VdpParams params;
};

VdpSetup vdp_setup(const json& cfg) {
    VdpSetup s;
    s.signal.kind = SignalKind::aprbs;
    s.signal.amplitude = {{cfg.value("u_min", -1.0), cfg.value("u_max", 1.0)}};
    s.signal.hold_min = cfg.value("hold_min", 50);
    s.signal.hold_max = cfg.value("hold_max", 150);
    s.split.n_te = cfg.value("n_te", 500);
    s.split.n_ve = cfg.value("n_ve", 300);
    s.split.n_f = cfg.value("n_f", 2000);
    s.split.n_test = cfg.value("n_test", 3000);
    s.dt = cfg.value("dt", 0.03);
    s.y0 = Vector::Constant(2, cfg.value("y0", 2.0));
    s.params.mu = cfg.value("mu", 1.0);
    return s;
}

struct FourTankSetup {
    SignalSpec signal;
    SplitSpec split;
    double dt = 1.0;
    Vector y0;
};

FourTankSetup fourtank_setup(const json& cfg) {
    FourTankSetup s;
    s.signal.kind = SignalKind::prbs;
    // Wide pump range and holds long relative to N_t: the labeled window
    // then contains only a couple of step responses, which is the scarce-
    // data regime the physics refinement targets.
    const double lo = cfg.value("v_min", 1.0), hi = cfg.value("v_max", 5.0);
    s.signal.amplitude = {{lo, hi}, {lo, hi}};
    s.signal.hold_min = cfg.value("hold_min", 150);
    s.signal.hold_max = cfg.value("hold_max", 400);
    s.split.n_te = cfg.value("n_te", 500);
    s.split.n_ve = cfg.value("n_ve", 300);
    s.split.n_f = cfg.value("n_f", 2000);
    s.split.n_test = cfg.value("n_test", 2000);
    s.dt = cfg.value("dt", 1.0);
    s.y0 = Vector::Constant(4, cfg.value("y0", 2.0));
    return s;
}

PiTrainConfig training_defaults(const json& cfg, double gamma) {
    PiTrainConfig tc;
    tc.ridge.gamma = gamma;
    // Suite default: the first-order optimizer with persistent moments
    // tracks the refresh-drifting objective more stably than restarted
    // quasi-Newton at these budgets.
    tc.m_outer = cfg.value("m_outer", 120);
    tc.k_inner = cfg.value("k_inner", 20);
    const std::string opt = cfg.value("optimizer", "adam");
    if (opt == "lbfgs")
        tc.optimizer = OptimizerKind::lbfgs;
    else if (opt == "adam")
        tc.optimizer = OptimizerKind::adam;
    else
        throw ConfigError("experiment: unknown optimizer '" + opt + "'");
    tc.adam.lr = cfg.value("adam_lr", 1.5e-2);
    // Anneal the step size ~100x over the run so the final iterates settle.
    tc.adam_lr_decay = cfg.value("adam_lr_decay", std::pow(0.01, 1.0 / tc.m_outer));
    return tc;
}

struct ArchMetrics {
    EvalOutcome esn, pi;  // pi: the requested physics-informed variant
    bool pi_failed = false;
    std::string pi_reason;
};

/// Trains the pretrained baseline plus one physics-informed variant on the
/// given dataset/reservoir and scores both on collocation + test.
ArchMetrics run_one(const OdeSystem& sys, const Dataset& ds, const ReservoirConfig& rc,
                    PiTrainConfig tc, BalanceMode mode, int warm_steps) {
    ArchMetrics m;
    const Reservoir res = init_reservoir(rc);
    tc.mode = mode;
    TrainResult tr;
    try {
        tr = train_pi_esn(res, ds.train_view(), sys, tc);
        m.pi = evaluate_mse(res, tr.readout, ds, warm_steps);
        if (m.pi.unstable) {
            m.pi_failed = true;
            m.pi_reason = "free-run divergence at step " + std::to_string(m.pi.diverged_at);
        }
        m.esn = evaluate_mse(res, tr.pretrained, ds, warm_steps);
    } catch (const InstabilityError& e) {
        m.pi_failed = true;
        m.pi_reason = e.what();
        // Baseline is still defined: pretraining never depends on physics.
        PiTrainConfig base = tc;
        base.skip_physics = true;
        tr = train_pi_esn(res, ds.train_view(), sys, base);
        m.esn = evaluate_mse(res, tr.pretrained, ds, warm_steps);
    }
    return m;
}

RunRecord record(const std::string& experiment, const std::string& system,
                 const std::string& arch, const ReservoirConfig& rc, const SplitSpec& split,
                 std::uint64_t sig_seed, double setting, const EvalOutcome& ev, bool failed,
                 const std::string& reason) {
    RunRecord r;
    r.experiment = experiment;
    r.system = system;
    r.architecture = arch;
    r.n_x = rc.n_x;
    r.n_t = split.n_t();
    r.n_f = split.n_f;
    r.reservoir_seed = rc.seed;
    r.signal_seed = sig_seed;
    r.setting = setting;
    r.colloc_mse = ev.colloc_mse;
    r.test_mse = ev.test_mse;
    r.excluded = failed || ev.unstable;
    r.exclusion_reason = r.excluded ? (reason.empty() ? "unstable evaluation" : reason) : "";
    return r;
}

GridSpec desk_grid(const json& cfg) {
    GridSpec g;
    if (cfg.contains("grid")) {
        const json& gj = cfg.at("grid");
        g.delta_in = gj.value("delta_in", std::vector<double>{});
        g.delta_fb = gj.value("delta_fb", std::vector<double>{});
        g.gamma = gj.value("gamma", std::vector<double>{});
    }
    if (g.delta_in.empty())
        for (double d = 0.05; d < 0.96; d += 0.10) g.delta_in.push_back(d);
    if (g.delta_fb.empty())
        for (double d = 0.05; d < 0.96; d += 0.10) g.delta_fb.push_back(d);
    if (g.gamma.empty())
        for (int e = -2; e >= -7; --e) g.gamma.push_back(std::pow(10.0, e));
    return g;
}

}  // namespace

ExperimentResult run_table1(const json& cfg) {
    ExperimentResult out;
    out.name = "table1";
    const std::uint64_t master = seed_of(cfg);
    const int seeds = cfg.value("seeds", 5);
    const VdpSetup setup = vdp_setup(cfg);
    const VanDerPol sys(setup.params);

    ReservoirConfig rc;
    rc.n_x = cfg.value("n_x", 100);
    rc.n_u = 1;
    rc.n_y = 2;
    rc.alpha = cfg.value("alpha", 1.0);
    rc.rho_star = cfg.value("rho", 0.8);

    // Hyperparameters from one grid search on the first seed's dataset,
    // reused across seeds.
    SignalSpec sig = setup.signal;
    sig.seed = signal_seed(master, 0);
    Dataset ds0 = make_dataset(sys, sig, setup.split, setup.dt, setup.y0, false);
    rc.seed = reservoir_seed(master, 0);
    const GridResult grid = grid_search(rc, ds0, desk_grid(cfg));
    std::cerr << "[table1] grid: delta_in=" << grid.best.delta_in
              << " delta_fb=" << grid.best.delta_fb << " gamma=" << grid.best.gamma
              << " val_mse=" << grid.best.val_mse << "\n";

    for (int i = 0; i < seeds; ++i) {
        SignalSpec s = setup.signal;
        s.seed = signal_seed(master, i);
        const Dataset ds = make_dataset(sys, s, setup.split, setup.dt, setup.y0, false);
        ReservoirConfig rci = grid.best_cfg;
        rci.seed = reservoir_seed(master, i);

        PiTrainConfig tc = training_defaults(cfg, grid.best.gamma);
        const ArchMetrics ma = run_one(sys, ds, rci, tc, BalanceMode::adaptive, -1);
        const ArchMetrics mi = run_one(sys, ds, rci, tc, BalanceMode::fixed, -1);

        out.runs.push_back(record(out.name, "vdp", "esn", rci, setup.split, s.seed, 0, ma.esn,
                                  ma.esn.unstable, ""));
        out.runs.push_back(record(out.name, "vdp", "pi-esn-i", rci, setup.split, s.seed, 0, mi.pi,
                                  mi.pi_failed, mi.pi_reason));
        out.runs.push_back(record(out.name, "vdp", "pi-esn-a", rci, setup.split, s.seed, 0, ma.pi,
                                  ma.pi_failed, ma.pi_reason));
    }
    for (const char* arch : {"esn", "pi-esn-i", "pi-esn-a"})
        out.aggregates.push_back(aggregate_runs(out.runs, arch, 0));
    return out;
}

ExperimentResult run_reservoir_sweep(const json& cfg) {
    ExperimentResult out;
    out.name = "reservoir-sweep";
    const std::uint64_t master = seed_of(cfg);
    const int seeds = cfg.value("seeds", 3);
    const auto sizes = cfg.value("sizes", std::vector<int>{200, 400});
    FourTankSetup setup = fourtank_setup(cfg);
    setup.split.n_te = cfg.value("n_te", 500);
    setup.split.n_ve = cfg.value("n_ve", 300);
    const FourTank sys;

    const double delta_in = cfg.value("delta_in", 0.1);
    const double delta_fb = cfg.value("delta_fb", 0.2);
    const double gamma = cfg.value("gamma", 1e-5);

    for (int n_x : sizes) {
        for (int i = 0; i < seeds; ++i) {
            SignalSpec s = setup.signal;
            s.seed = signal_seed(master, i);
            const Dataset ds = make_dataset(sys, s, setup.split, setup.dt, setup.y0, false);
            ReservoirConfig rc;
            rc.n_x = n_x;
            rc.n_u = 2;
            rc.n_y = 4;
            rc.alpha = cfg.value("alpha", 1.0);
            rc.rho_star = cfg.value("rho", 0.8);
            rc.delta_in = delta_in;
            rc.delta_fb = delta_fb;
            rc.seed = reservoir_seed(master, 1000 * n_x + i);

            PiTrainConfig tc = training_defaults(cfg, gamma);
            const ArchMetrics m = run_one(sys, ds, rc, tc, BalanceMode::adaptive, -1);
            out.runs.push_back(record(out.name, "fourtank", "esn", rc, setup.split, s.seed, n_x,
                                      m.esn, m.esn.unstable, ""));
            out.runs.push_back(record(out.name, "fourtank", "pi-esn-a", rc, setup.split, s.seed,
                                      n_x, m.pi, m.pi_failed, m.pi_reason));
        }
        out.aggregates.push_back(aggregate_runs(out.runs, "esn", n_x));
        out.aggregates.push_back(aggregate_runs(out.runs, "pi-esn-a", n_x));
    }
    return out;
}

ExperimentResult run_datasize_sweep(const json& cfg) {
    ExperimentResult out;
    out.name = "datasize-sweep";
    const std::uint64_t master = seed_of(cfg);
    const int seeds = cfg.value("seeds", 3);
    const auto budgets = cfg.value("budgets", std::vector<int>{250, 500, 800});
    const FourTank sys;

    for (int n_t : budgets) {
        FourTankSetup setup = fourtank_setup(cfg);
        setup.split.n_te = n_t;
        setup.split.n_ve = 0;
        for (int i = 0; i < seeds; ++i) {
            SignalSpec s = setup.signal;
            s.seed = signal_seed(master, i);
            const Dataset ds = make_dataset(sys, s, setup.split, setup.dt, setup.y0, false);
            ReservoirConfig rc;
            rc.n_x = cfg.value("n_x", 200);
            rc.n_u = 2;
            rc.n_y = 4;
            rc.alpha = cfg.value("alpha", 1.0);
            rc.rho_star = cfg.value("rho", 0.8);
            rc.delta_in = cfg.value("delta_in", 0.1);
            rc.delta_fb = cfg.value("delta_fb", 0.2);
            rc.seed = reservoir_seed(master, 1000 * n_t + i);

            PiTrainConfig tc = training_defaults(cfg, cfg.value("gamma", 1e-5));
            const ArchMetrics m = run_one(sys, ds, rc, tc, BalanceMode::adaptive, -1);
            out.runs.push_back(record(out.name, "fourtank", "esn", rc, setup.split, s.seed, n_t,
                                      m.esn, m.esn.unstable, ""));
            out.runs.push_back(record(out.name, "fourtank", "pi-esn-a", rc, setup.split, s.seed,
                                      n_t, m.pi, m.pi_failed, m.pi_reason));
        }
        out.aggregates.push_back(aggregate_runs(out.runs, "esn", n_t));
        out.aggregates.push_back(aggregate_runs(out.runs, "pi-esn-a", n_t));
    }
    return out;
}

ExperimentResult run_robustness(const json& cfg) {
    ExperimentResult out;
    out.name = "robustness";
    const std::uint64_t master = seed_of(cfg);
    const int seeds = cfg.value("seeds", 3);
    const auto mus = cfg.value("mu_values", std::vector<double>{0.8, 0.95, 1.0, 1.1});
    const VdpSetup setup = vdp_setup(cfg);
    const VanDerPol true_sys(setup.params);  // data always from mu = 1

    ReservoirConfig rc;
    rc.n_x = cfg.value("n_x", 100);
    rc.n_u = 1;
    rc.n_y = 2;
    rc.alpha = cfg.value("alpha", 1.0);
    rc.rho_star = cfg.value("rho", 0.8);

    SignalSpec sig0 = setup.signal;
    sig0.seed = signal_seed(master, 0);
    Dataset ds0 = make_dataset(true_sys, sig0, setup.split, setup.dt, setup.y0, false);
    rc.seed = reservoir_seed(master, 0);
    const GridResult grid = grid_search(rc, ds0, desk_grid(cfg));

    for (double mu : mus) {
        const VanDerPol physics_sys(VdpParams{mu});  // perturbed model in the loss only
        for (int i = 0; i < seeds; ++i) {
            SignalSpec s = setup.signal;
            s.seed = signal_seed(master, i);
            const Dataset ds = make_dataset(true_sys, s, setup.split, setup.dt, setup.y0, false);
            ReservoirConfig rci = grid.best_cfg;
            rci.seed = reservoir_seed(master, i);

            PiTrainConfig tc = training_defaults(cfg, grid.best.gamma);
            const ArchMetrics m = run_one(physics_sys, ds, rci, tc, BalanceMode::adaptive, -1);
            out.runs.push_back(record(out.name, "vdp", "esn", rci, setup.split, s.seed, mu, m.esn,
                                      m.esn.unstable, ""));
            out.runs.push_back(record(out.name, "vdp", "pi-esn-a", rci, setup.split, s.seed, mu,
                                      m.pi, m.pi_failed, m.pi_reason));
        }
        out.aggregates.push_back(aggregate_runs(out.runs, "esn", mu));
        out.aggregates.push_back(aggregate_runs(out.runs, "pi-esn-a", mu));
    }
    return out;
}

ExperimentResult run_esp(const json& cfg) {
    ExperimentResult out;
    out.name = "esp";
    const std::uint64_t master = seed_of(cfg);
    const int seeds = cfg.value("seeds", 3);

    const EspSystem sys;
    SignalSpec sig;
    sig.kind = SignalKind::aprbs;
    sig.amplitude = {{cfg.value("f_min", 35.0), cfg.value("f_max", 65.0)},
                     {cfg.value("z_min", 0.1), cfg.value("z_max", 1.0)}};
    sig.hold_min = cfg.value("hold_min", 500);
    sig.hold_max = cfg.value("hold_max", 800);

    SplitSpec split;
    split.n_te = cfg.value("n_te", 2000);
    split.n_ve = cfg.value("n_ve", 1000);
    split.n_f = cfg.value("n_f", 1000);
    split.n_test = cfg.value("n_test", 2000);

    // The published initial state (p_bh = 70e6 Pa) exceeds the table's
    // reservoir pressure; dataset generation overrides it to a consistent
    // operating point.
    Vector y0(3);
    y0 << cfg.value("p_bh0", 8e6), cfg.value("p_wh0", 3e6), cfg.value("q0", 0.012);
    std::cerr << "[esp] initial state override: p_bh0=" << y0(0) << " p_wh0=" << y0(1)
              << " q0=" << y0(2) << " (published values are inconsistent with p_r)\n";

    const double dt = cfg.value("dt", 0.01);
    const int warm = cfg.value("warmup", 50);

    ReservoirConfig rc;
    rc.n_x = cfg.value("n_x", 300);
    rc.n_u = 2;
    rc.n_y = 3;
    rc.alpha = cfg.value("alpha", 0.15);
    rc.rho_star = cfg.value("rho", 0.8);
    rc.delta_in = cfg.value("delta_in", 0.1);
    rc.delta_fb = cfg.value("delta_fb", 0.1);
    rc.delta_b = cfg.value("delta_b", 0.1);

    for (int i = 0; i < seeds; ++i) {
        SignalSpec s = sig;
        s.seed = signal_seed(master, i);
        const Dataset ds = make_dataset(sys, s, split, dt, y0, true);
        ReservoirConfig rci = rc;
        rci.seed = reservoir_seed(master, i);

        PiTrainConfig tc = training_defaults(cfg, cfg.value("gamma", 0.0599));
        const ArchMetrics m = run_one(sys, ds, rci, tc, BalanceMode::adaptive, warm);
        out.runs.push_back(
            record(out.name, "esp", "esn", rci, split, s.seed, 0, m.esn, m.esn.unstable, ""));
        out.runs.push_back(record(out.name, "esp", "pi-esn-a", rci, split, s.seed, 0, m.pi,
                                  m.pi_failed, m.pi_reason));
    }
    out.aggregates.push_back(aggregate_runs(out.runs, "esn", 0));
    out.aggregates.push_back(aggregate_runs(out.runs, "pi-esn-a", 0));
    return out;
}

ExperimentResult run_mpc_comparison(const json& cfg) {
    ExperimentResult out;
    out.name = "mpc-comparison";
    const std::uint64_t master = seed_of(cfg);
    const FourTank sys;

    FourTankSetup setup = fourtank_setup(cfg);
    setup.split.n_te = cfg.value("n_te", 500);
    setup.split.n_ve = 0;
    setup.split.n_f = cfg.value("n_f", 2000);
    setup.split.n_test = cfg.value("n_test", 500);

    SignalSpec s = setup.signal;
    s.seed = signal_seed(master, 0);
    const Dataset ds = make_dataset(sys, s, setup.split, setup.dt, setup.y0, false);

    ReservoirConfig rc;
    rc.n_x = cfg.value("n_x", 200);
    rc.n_u = 2;
    rc.n_y = 4;
    rc.alpha = cfg.value("alpha", 1.0);
    rc.rho_star = cfg.value("rho", 0.8);
    rc.delta_in = cfg.value("delta_in", 0.1);
    rc.delta_fb = cfg.value("delta_fb", 0.2);
    rc.seed = reservoir_seed(master, 0);

    const Reservoir res = init_reservoir(rc);
    PiTrainConfig tc = training_defaults(cfg, cfg.value("gamma", 1e-5));
    tc.mode = BalanceMode::adaptive;
    const TrainResult tr = train_pi_esn(res, ds.train_view(), sys, tc);

    MpcConfig mc;
    mc.horizon_y = cfg.value("horizon_y", 10);
    mc.horizon_u = cfg.value("horizon_u", 3);
    mc.q_weight = Vector::Constant(2, cfg.value("q_weight", 5.0));
    mc.r_weight = Vector::Constant(2, cfg.value("r_weight", 1.0));
    mc.b_filter = cfg.value("b", 0.6);
    mc.u_min = Vector::Constant(2, cfg.value("u_min", 0.0));
    mc.u_max = Vector::Constant(2, cfg.value("u_max", 5.0));
    mc.y_min = Vector::Constant(2, cfg.value("y_min", 0.0));
    mc.y_max = Vector::Constant(2, cfg.value("y_max", 3.0));
    mc.controlled = {0, 1};

    const int steps = cfg.value("steps", 600);
    const int dist_at = cfg.value("disturbance_step", 300);
    Matrix refs(steps, 2);
    const int step1 = cfg.value("ref_switch", 150);
    for (int k = 0; k < steps; ++k) {
        refs(k, 0) = k < step1 ? cfg.value("ref1_a", 1.6) : cfg.value("ref1_b", 2.2);
        refs(k, 1) = k < step1 ? cfg.value("ref2_a", 1.0) : cfg.value("ref2_b", 1.4);
    }
    DisturbanceSpec dist;
    dist.at_step = dist_at;
    dist.output_offset = Vector::Zero(4);
    dist.output_offset(0) = cfg.value("disturbance", 0.25);
    dist.output_offset(1) = cfg.value("disturbance", 0.25);

    // Synchronize plant and model on a constant-input prefix before closing
    // the loop.
    const int prefix = cfg.value("prefix_steps", 100);
    const Vector u_hold = Vector::Constant(2, cfg.value("u_hold", 3.0));
    Matrix prefix_inputs(prefix, 2);
    for (int k = 0; k < prefix; ++k) prefix_inputs.row(k) = u_hold.transpose();
    const Matrix prefix_traj = simulate_euler(sys, setup.y0, prefix_inputs, setup.dt);
    const Vector y_start = prefix_traj.row(prefix - 1).transpose();

    NamedTable iae_table;
    iae_table.name = "iae";
    iae_table.header = {"iae", "max_kkt", "relaxed_steps"};
    iae_table.rows.resize(2, 3);
    std::vector<std::pair<std::string, const Readout*>> models = {
        {"esn", &tr.pretrained}, {"pi-esn-a", &tr.readout}};
    for (size_t mi = 0; mi < models.size(); ++mi) {
        PnmpcController ctrl(res, *models[mi].second, mc);
        ctrl.reset(prefix_inputs, prefix_traj, u_hold);
        ClosedLoopResult loop = closed_loop(sys, y_start, ctrl, refs, dist, steps, setup.dt);
        iae_table.row_labels.push_back(models[mi].first);
        iae_table.rows(static_cast<int>(mi), 0) = loop.iae;
        iae_table.rows(static_cast<int>(mi), 1) = loop.max_kkt;
        iae_table.rows(static_cast<int>(mi), 2) = loop.relaxed_any ? 1.0 : 0.0;
        out.tables.push_back(NamedTable{"loop-" + models[mi].first, loop.log_header, {}, loop.log});

        RunRecord r;
        r.experiment = out.name;
        r.system = "fourtank";
        r.architecture = models[mi].first;
        r.n_x = rc.n_x;
        r.n_t = setup.split.n_t();
        r.n_f = setup.split.n_f;
        r.reservoir_seed = rc.seed;
        r.signal_seed = s.seed;
        r.setting = 0;
        r.colloc_mse = loop.iae;  // IAE carried in the metric column
        r.test_mse = loop.max_kkt;
        out.runs.push_back(r);
        std::cerr << "[mpc] " << models[mi].first << " IAE=" << loop.iae
                  << " max_kkt=" << loop.max_kkt << "\n";
    }
    out.tables.push_back(std::move(iae_table));
    return out;
}

ExperimentResult run_suite(const std::string& name, const json& cfg) {
    if (name == "table1") return run_table1(cfg);
    if (name == "reservoir-sweep") return run_reservoir_sweep(cfg);
    if (name == "datasize-sweep") return run_datasize_sweep(cfg);
    if (name == "robustness") return run_robustness(cfg);
    if (name == "esp") return run_esp(cfg);
    if (name == "mpc-comparison") return run_mpc_comparison(cfg);
    throw ConfigError("unknown suite '" + name + "'");
}

}  // namespace piesn
