#include "piesn.h"

#include "piesn/commands.hpp"
#include "piesn/model_io.hpp"
#include "piesn/reservoir.hpp"

#include <cstring>
#include <string>

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

piesn_status map_exception() {
    try {
        throw;
    } catch (const piesn::ConfigError& e) {
        set_error(e.what());
        return PIESN_ERR_CONFIG;
    } catch (const piesn::InstabilityError& e) {
        set_error(e.what());
        return PIESN_ERR_INSTABILITY;
    } catch (const piesn::DivergenceError& e) {
        set_error(e.what());
        return PIESN_ERR_INSTABILITY;
    } catch (const std::exception& e) {
        set_error(e.what());
        return PIESN_ERR;
    } catch (...) {
        set_error("unknown error");
        return PIESN_ERR;
    }
}

}  // namespace

struct piesn_model {
    piesn::ModelFile file;
};

extern "C" {

const char* piesn_version(void) { return "0.1.0"; }

const char* piesn_last_error(void) { return g_last_error.c_str(); }

piesn_status piesn_run(const char* command, const char* config_path, const char* output_dir) {
    if (!command || !config_path || !output_dir) {
        set_error("piesn_run: null argument");
        return PIESN_ERR_INVALID;
    }
    g_last_error.clear();
    try {
        const int rc = piesn::run_command(command, config_path, output_dir);
        if (rc != 0) set_error(piesn::last_command_error());
        return static_cast<piesn_status>(rc);
    } catch (...) {
        return map_exception();
    }
}

piesn_status piesn_model_load(const char* path, piesn_model** out) {
    if (!path || !out) {
        set_error("piesn_model_load: null argument");
        return PIESN_ERR_INVALID;
    }
    g_last_error.clear();
    try {
        auto* m = new piesn_model{piesn::load_model(path)};
        *out = m;
        return PIESN_OK;
    } catch (...) {
        *out = nullptr;
        return map_exception();
    }
}

void piesn_model_free(piesn_model* m) { delete m; }

int piesn_model_reservoir_size(const piesn_model* m) { return m ? m->file.reservoir.n_x() : -1; }
int piesn_model_input_dim(const piesn_model* m) { return m ? m->file.reservoir.n_u() : -1; }
int piesn_model_output_dim(const piesn_model* m) { return m ? m->file.reservoir.n_y() : -1; }

piesn_status piesn_model_predict(const piesn_model* m, const double* inputs, size_t steps,
                                 const double* y0, double* outputs) {
    if (!m || !inputs || !y0 || !outputs || steps == 0) {
        set_error("piesn_model_predict: bad arguments");
        return PIESN_ERR_INVALID;
    }
    g_last_error.clear();
    try {
        const int n_u = m->file.reservoir.n_u();
        const int n_y = m->file.reservoir.n_y();
        piesn::Matrix u(steps, n_u);
        for (size_t r = 0; r < steps; ++r)
            for (int c = 0; c < n_u; ++c) u(static_cast<int>(r), c) = inputs[r * n_u + c];
        piesn::Vector fb(n_y);
        for (int c = 0; c < n_y; ++c) fb(c) = y0[c];
        const piesn::FreeRunResult fr =
            piesn::run_free(m->file.reservoir, m->file.readout, u,
                            piesn::Vector::Zero(m->file.reservoir.n_x()), fb);
        for (size_t r = 0; r < steps; ++r)
            for (int c = 0; c < n_y; ++c) outputs[r * n_y + c] = fr.outputs(static_cast<int>(r), c);
        return PIESN_OK;
    } catch (...) {
        return map_exception();
    }
}

piesn_status piesn_model_predict_warm(const piesn_model* m, const double* inputs, size_t steps,
                                      const double* targets, size_t n_warm, double* outputs) {
    if (!m || !inputs || !targets || !outputs || steps == 0 || n_warm == 0 || n_warm >= steps) {
        set_error("piesn_model_predict_warm: bad arguments");
        return PIESN_ERR_INVALID;
    }
    g_last_error.clear();
    try {
        const int n_u = m->file.reservoir.n_u();
        const int n_y = m->file.reservoir.n_y();
        piesn::Matrix u(steps, n_u);
        for (size_t r = 0; r < steps; ++r)
            for (int c = 0; c < n_u; ++c) u(static_cast<int>(r), c) = inputs[r * n_u + c];
        piesn::Matrix t(n_warm, n_y);
        for (size_t r = 0; r < n_warm; ++r)
            for (int c = 0; c < n_y; ++c) t(static_cast<int>(r), c) = targets[r * n_y + c];

        const piesn::Vector x = piesn::warmup(m->file.reservoir, u.topRows(n_warm), t,
                                              static_cast<int>(n_warm));
        const piesn::Vector y_last = t.row(static_cast<int>(n_warm) - 1).transpose();
        const piesn::FreeRunResult fr = piesn::run_free(
            m->file.reservoir, m->file.readout, u.bottomRows(steps - n_warm), x, y_last);
        const size_t rows = steps - n_warm;
        for (size_t r = 0; r < rows; ++r)
            for (int c = 0; c < n_y; ++c) outputs[r * n_y + c] = fr.outputs(static_cast<int>(r), c);
        return PIESN_OK;
    } catch (...) {
        return map_exception();
    }
}

piesn_status piesn_run_overrides(const char* command, const char* config_path,
                                 const char* output_dir, const char* overrides_json) {
    if (!command || !config_path || !output_dir) {
        set_error("piesn_run_overrides: null argument");
        return PIESN_ERR_INVALID;
    }
    g_last_error.clear();
    try {
        const int rc = (!overrides_json || !*overrides_json)
                           ? piesn::run_command(command, config_path, output_dir)
                           : piesn::run_command_overrides(command, config_path, output_dir,
                                                          overrides_json);
        if (rc != 0) set_error(piesn::last_command_error());
        return static_cast<piesn_status>(rc);
    } catch (...) {
        return map_exception();
    }
}

}  // extern "C"
