// Black-box checks of the shared library: only the public C header is used.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "piesn.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("piesn_capi_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const char* kSimulateCfg = R"({
  "seed": 7,
  "system": {"name": "vdp", "dt": 0.03, "y0": [2.0, 2.0]},
  "signal": {"kind": "aprbs", "amplitude": [[-1.0, 1.0]], "hold": [30, 80]},
  "split": {"train": 150, "validation": 50, "collocation": 200, "test": 200}
})";

const char* kTrainCfg = R"({
  "seed": 7,
  "dataset": "DATASET",
  "system": {"name": "vdp"},
  "reservoir": {"n_x": 50, "rho": 0.8, "delta_in": 0.2, "delta_fb": 0.2},
  "ridge": {"gamma": 1e-5},
  "training": {"mode": "adaptive", "m_outer": 4, "k_inner": 5}
})";

}  // namespace

TEST_CASE("version and error strings exist") {
    CHECK(std::string(piesn_version()).size() > 0);
    CHECK(piesn_last_error() != nullptr);
}

TEST_CASE("null arguments are rejected") {
    CHECK(piesn_run(nullptr, "x", "y") == PIESN_ERR_INVALID);
    piesn_model* m = nullptr;
    CHECK(piesn_model_load(nullptr, &m) == PIESN_ERR_INVALID);
}

TEST_CASE("missing config maps to the config exit code") {
    TempDir tmp;
    CHECK(piesn_run("simulate", tmp.file("missing.json").c_str(), tmp.file("out").c_str()) ==
          PIESN_ERR_CONFIG);
    CHECK(std::string(piesn_last_error()).size() > 0);
}

TEST_CASE("unknown config keys map to the config exit code") {
    TempDir tmp;
    write_file(tmp.file("bad.json"), "{\"sneed\": 1}");
    CHECK(piesn_run("simulate", tmp.file("bad.json").c_str(), tmp.file("out").c_str()) ==
          PIESN_ERR_CONFIG);
}

TEST_CASE("simulate -> train -> evaluate -> predict through the C surface") {
    TempDir tmp;
    write_file(tmp.file("sim.json"), kSimulateCfg);
    REQUIRE(piesn_run("simulate", tmp.file("sim.json").c_str(), tmp.path.string().c_str()) ==
            PIESN_OK);
    REQUIRE(fs::exists(tmp.file("data.csv")));
    REQUIRE(fs::exists(tmp.file("data.csv.meta.json")));

    std::string train_cfg = kTrainCfg;
    train_cfg.replace(train_cfg.find("DATASET"), 7, "data.csv");
    write_file(tmp.file("train.json"), train_cfg);
    REQUIRE(piesn_run("train", tmp.file("train.json").c_str(), tmp.path.string().c_str()) ==
            PIESN_OK);
    REQUIRE(fs::exists(tmp.file("model.json")));
    REQUIRE(fs::exists(tmp.file("train_report.csv")));

    // evaluate against thresholds that must hold trivially
    write_file(tmp.file("eval.json"), std::string(R"({
      "dataset": "data.csv", "model": "model.json",
      "thresholds": {"max_test_mse": 1e9}
    })"));
    CHECK(piesn_run("evaluate", tmp.file("eval.json").c_str(), tmp.path.string().c_str()) ==
          PIESN_OK);
    CHECK(fs::exists(tmp.file("metrics.csv")));

    // impossible threshold -> acceptance exit code
    write_file(tmp.file("eval2.json"), std::string(R"({
      "dataset": "data.csv", "model": "model.json",
      "thresholds": {"max_test_mse": 0.0}
    })"));
    CHECK(piesn_run("evaluate", tmp.file("eval2.json").c_str(), tmp.path.string().c_str()) ==
          PIESN_ERR_ACCEPTANCE);

    // model handle + prediction
    piesn_model* model = nullptr;
    REQUIRE(piesn_model_load(tmp.file("model.json").c_str(), &model) == PIESN_OK);
    CHECK(piesn_model_reservoir_size(model) == 50);
    CHECK(piesn_model_input_dim(model) == 1);
    CHECK(piesn_model_output_dim(model) == 2);

    const size_t steps = 40;
    std::vector<double> inputs(steps, 0.3);
    std::vector<double> y0 = {2.0, 2.0};
    std::vector<double> outputs(steps * 2, 0.0);
    CHECK(piesn_model_predict(model, inputs.data(), steps, y0.data(), outputs.data()) == PIESN_OK);
    bool all_finite = true;
    for (double v : outputs) all_finite = all_finite && std::isfinite(v);
    CHECK(all_finite);
    piesn_model_free(model);

    // determinism across reruns: model files byte-identical
    const std::string first = slurp(tmp.file("model.json"));
    REQUIRE(piesn_run("train", tmp.file("train.json").c_str(), tmp.path.string().c_str()) ==
            PIESN_OK);
    CHECK(slurp(tmp.file("model.json")) == first);
}

TEST_CASE("overrides switch the training mode") {
    TempDir tmp;
    write_file(tmp.file("sim.json"), kSimulateCfg);
    REQUIRE(piesn_run("simulate", tmp.file("sim.json").c_str(), tmp.path.string().c_str()) ==
            PIESN_OK);
    std::string train_cfg = kTrainCfg;
    train_cfg.replace(train_cfg.find("DATASET"), 7, "data.csv");
    write_file(tmp.file("train.json"), train_cfg);
    CHECK(piesn_run_overrides("train", tmp.file("train.json").c_str(), tmp.path.string().c_str(),
                              "{\"mode\": \"esn-only\"}") == PIESN_OK);
    // esn-only models carry no adaptive state
    const std::string text = slurp(tmp.file("model.json"));
    CHECK(text.find("adaptive") == std::string::npos);
}
