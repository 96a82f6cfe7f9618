// Command-line front end. Links only the public C API of the shared library.
#include "piesn.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

struct CommonArgs {
    std::string config;
    std::string output_dir = ".";
    std::string seed;
    std::string mode;
};

void add_common(CLI::App* sub, CommonArgs& args, bool with_mode) {
    sub->add_option("config", args.config, "JSON run config")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output-dir", args.output_dir, "directory for artifacts");
    sub->add_option("--seed", args.seed, "override the master seed");
    if (with_mode)
        sub->add_option("--mode", args.mode, "esn-only | pi-fixed | pi-adaptive")
            ->check(CLI::IsMember({"esn-only", "pi-fixed", "pi-adaptive"}));
}

std::string overrides_of(const CommonArgs& args) {
    std::string ov = "{";
    bool first = true;
    if (!args.seed.empty()) {
        ov += "\"seed\": " + args.seed;
        first = false;
    }
    if (!args.mode.empty()) {
        if (!first) ov += ", ";
        ov += "\"mode\": \"" + args.mode + "\"";
        first = false;
    }
    ov += "}";
    return first ? "" : ov;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physics-informed echo state network toolkit"};
    app.set_version_flag("--version", std::string(piesn_version()));
    app.require_subcommand(1);

    const char* names[] = {"simulate", "train", "evaluate", "mpc", "suite"};
    const char* descs[] = {
        "simulate a benchmark plant and write the dataset",
        "train a model (ridge pretraining + physics refinement)",
        "score a trained model on the withheld regions",
        "run closed-loop model predictive control scenarios",
        "run a reproduction experiment suite",
    };
    CommonArgs args[5];
    for (int i = 0; i < 5; ++i)
        add_common(app.add_subcommand(names[i], descs[i]), args[i], std::string(names[i]) == "train");

    CLI11_PARSE(app, argc, argv);

    for (int i = 0; i < 5; ++i) {
        if (app.get_subcommand(names[i])->parsed()) {
            const std::string ov = overrides_of(args[i]);
            const piesn_status rc = piesn_run_overrides(names[i], args[i].config.c_str(),
                                                        args[i].output_dir.c_str(),
                                                        ov.empty() ? nullptr : ov.c_str());
            if (rc != PIESN_OK && piesn_last_error()[0] != '\0')
                std::fprintf(stderr, "piesn: %s\n", piesn_last_error());
            return rc;
        }
    }
    return PIESN_ERR_INVALID;
}
