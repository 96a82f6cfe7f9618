#include "piesn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <tuple>

namespace piesn {

void GridSpec::validate() const {
    if (delta_in.empty() || delta_fb.empty() || gamma.empty())
        throw ConfigError("grid: delta_in, delta_fb and gamma grids must be nonempty");
}

namespace {

double region_mse(const Matrix& pred, const Matrix& labels) {
    // Eq.-4 convention: mean over outputs of the mean over time.
    return (pred - labels).squaredNorm() /
           (static_cast<double>(pred.rows()) * static_cast<double>(pred.cols()));
}

}  // namespace

EvalOutcome evaluate_mse(const Reservoir& res, const Readout& ro, const Dataset& ds,
                         int warm_steps) {
    EvalOutcome out;
    const int n_t = ds.split().n_t();
    const int warm = warm_steps < 0 ? n_t : std::min(warm_steps, n_t);

    const Matrix train_u = ds.esn_inputs(Region::labeled);
    const Matrix train_y = ds.labels(Region::labeled);

    // Teacher-force the trailing `warm` labeled rows, then free-run across
    // collocation + test continuously.
    Vector x = Vector::Zero(res.n_x());
    Vector y_fb = train_y.row(0).transpose();
    if (warm > 0) {
        const StateMatrix sm = run_teacher_forced(res, train_u.bottomRows(warm),
                                                  train_y.bottomRows(warm), x);
        x = sm.cols.col(warm - 1);
        y_fb = train_y.row(n_t - 1).transpose();
    }

    const int n_f = ds.split().n_f;
    const int n_test = ds.split().n_test;
    Matrix inputs(n_f + n_test, train_u.cols());
    inputs.topRows(n_f) = ds.esn_inputs(Region::collocation);
    inputs.bottomRows(n_test) = ds.esn_inputs(Region::test);

    Matrix pred;
    try {
        const FreeRunResult fr = run_free(res, ro, inputs, x, y_fb);
        pred = fr.outputs;
    } catch (const DivergenceError& e) {
        out.unstable = true;
        out.diverged_at = e.step;
        return out;
    }

    if (n_f > 0)
        out.colloc_mse = region_mse(pred.topRows(n_f).transpose(),
                                    ds.evaluation_labels(Region::collocation).transpose());
    if (n_test > 0)
        out.test_mse = region_mse(pred.bottomRows(n_test).transpose(),
                                  ds.evaluation_labels(Region::test).transpose());
    return out;
}

GridResult grid_search(const ReservoirConfig& base, const Dataset& ds, const GridSpec& grid) {
    grid.validate();
    if (ds.split().n_ve <= 0) throw ConfigError("grid search needs a validation region");

    const std::vector<double> alphas = grid.alpha.empty() ? std::vector<double>{base.alpha} : grid.alpha;
    const std::vector<double> rhos = grid.rho.empty() ? std::vector<double>{base.rho_star} : grid.rho;

    const Matrix tr_u = ds.esn_inputs(Region::train);
    const Matrix tr_y = ds.labels(Region::train);
    const Matrix ve_u = ds.esn_inputs(Region::validation);
    const Matrix ve_y = ds.labels(Region::validation);
    const int n_te = ds.split().n_te;

    GridResult result;
    bool any_ok = false;
    auto key = [](const GridCell& c) {
        return std::make_tuple(c.val_mse, c.gamma, c.delta_in, c.delta_fb, c.alpha, c.rho);
    };

    for (double rho : rhos)
        for (double alpha : alphas)
            for (double din : grid.delta_in)
                for (double dfb : grid.delta_fb) {
                    ReservoirConfig cfg = base;
                    cfg.delta_in = din;
                    cfg.delta_fb = dfb;
                    cfg.alpha = alpha;
                    cfg.rho_star = rho;
                    const Reservoir res = init_reservoir(cfg);
                    const StateMatrix x_tr =
                        run_teacher_forced(res, tr_u, tr_y, Vector::Zero(cfg.n_x));
                    const Vector x_end = x_tr.cols.col(n_te - 1);
                    const Vector y_end = tr_y.row(n_te - 1).transpose();
                    for (double gamma : grid.gamma) {
                        GridCell cell{din, dfb, gamma, alpha, rho, 0.0, false};
                        try {
                            const Readout ro = ridge_fit(x_tr.cols, tr_y, gamma);
                            const FreeRunResult fr = run_free(res, ro, ve_u, x_end, y_end);
                            cell.val_mse =
                                region_mse(fr.outputs.transpose(), ve_y.transpose());
                        } catch (const Error&) {
                            cell.diverged = true;
                            cell.val_mse = std::numeric_limits<double>::infinity();
                        }
                        result.table.push_back(cell);
                        if (!cell.diverged && std::isfinite(cell.val_mse)) {
                            if (!any_ok || key(cell) < key(result.best)) result.best = cell;
                            any_ok = true;
                        }
                    }
                }

    if (!any_ok) throw NumericsError("grid search: every cell diverged");
    result.best_cfg = base;
    result.best_cfg.delta_in = result.best.delta_in;
    result.best_cfg.delta_fb = result.best.delta_fb;
    result.best_cfg.alpha = result.best.alpha;
    result.best_cfg.rho_star = result.best.rho;
    return result;
}

Aggregate aggregate_runs(const std::vector<RunRecord>& runs, const std::string& arch,
                         double setting) {
    Aggregate agg;
    agg.architecture = arch;
    agg.setting = setting;
    double sum_c = 0, sum_t = 0;
    std::vector<double> cs, ts;
    for (const auto& r : runs) {
        if (r.architecture != arch || r.setting != setting) continue;
        if (r.excluded) {
            ++agg.excluded;
            continue;
        }
        sum_c += r.colloc_mse;
        sum_t += r.test_mse;
        cs.push_back(r.colloc_mse);
        ts.push_back(r.test_mse);
        ++agg.runs;
    }
    if (agg.runs > 0) {
        agg.colloc_mean = sum_c / agg.runs;
        agg.test_mean = sum_t / agg.runs;
        double vc = 0, vt = 0;
        for (size_t i = 0; i < cs.size(); ++i) {
            vc += (cs[i] - agg.colloc_mean) * (cs[i] - agg.colloc_mean);
            vt += (ts[i] - agg.test_mean) * (ts[i] - agg.test_mean);
        }
        agg.colloc_std = std::sqrt(vc / agg.runs);
        agg.test_std = std::sqrt(vt / agg.runs);
    }
    return agg;
}

void ExperimentResult::write_csv(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/runs.csv");
        if (!out) throw IoError("cannot open for writing: " + dir + "/runs.csv");
        out << "experiment,system,architecture,n_x,n_t,n_f,reservoir_seed,signal_seed,setting,"
               "colloc_mse,test_mse,excluded,reason\n";
        for (const auto& r : runs) {
            out << r.experiment << ',' << r.system << ',' << r.architecture << ',' << r.n_x << ','
                << r.n_t << ',' << r.n_f << ',' << r.reservoir_seed << ',' << r.signal_seed << ','
                << format_double(r.setting) << ',' << format_double(r.colloc_mse) << ','
                << format_double(r.test_mse) << ',' << (r.excluded ? 1 : 0) << ','
                << r.exclusion_reason << '\n';
        }
    }
    {
        std::ofstream out(dir + "/summary.csv");
        if (!out) throw IoError("cannot open for writing: " + dir + "/summary.csv");
        out << "experiment,architecture,setting,runs,excluded,colloc_mean,colloc_std,test_mean,"
               "test_std\n";
        for (const auto& a : aggregates) {
            out << name << ',' << a.architecture << ',' << format_double(a.setting) << ','
                << a.runs << ',' << a.excluded << ',' << format_double(a.colloc_mean) << ','
                << format_double(a.colloc_std) << ',' << format_double(a.test_mean) << ','
                << format_double(a.test_std) << '\n';
        }
    }
    for (const auto& t : tables) {
        std::ofstream out(dir + "/" + t.name + ".csv");
        if (!out) throw IoError("cannot open for writing: " + dir + "/" + t.name + ".csv");
        const bool labeled = !t.row_labels.empty();
        if (labeled) out << "label,";
        for (size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
        out << '\n';
        for (int r = 0; r < t.rows.rows(); ++r) {
            if (labeled) out << t.row_labels[r] << ',';
            for (int c = 0; c < t.rows.cols(); ++c)
                out << (c ? "," : "") << format_double(t.rows(r, c));
            out << '\n';
        }
    }
}

}  // namespace piesn
