#include "piesn/dataset.hpp"

#include "piesn/simulate.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace piesn {

using nlohmann::json;

void SplitSpec::validate() const {
    if (n_te < 0 || n_ve < 0 || n_f < 0 || n_test < 0)
        throw ConfigError("split: section lengths must be non-negative");
    if (total() <= 0) throw ConfigError("split: empty dataset");
}

Matrix OutputScaling::to_physical(const Matrix& y_esn) const {
    if (identity()) return y_esn;
    return (y_esn.array().colwise() * scale.array()).colwise() + offset.array();
}

Dataset::Dataset(TimeSeries data, SplitSpec split, bool normalize)
    : data_(std::move(data)), split_(split), normalized_(normalize) {
    split_.validate();
    if (split_.total() != data_.length())
        throw ConfigError("split sums to " + std::to_string(split_.total()) + " but dataset has " +
                          std::to_string(data_.length()) + " rows");
    const int n_t = split_.n_t();
    if (normalized_) {
        if (n_t < 2) throw ConfigError("normalization needs a labeled region");
        // Bounds from the labeled region only; withheld regions must not
        // influence the scaling.
        in_lo_ = data_.inputs.topRows(n_t).colwise().minCoeff().transpose();
        in_hi_ = data_.inputs.topRows(n_t).colwise().maxCoeff().transpose();
        out_lo_ = data_.states.topRows(n_t).colwise().minCoeff().transpose();
        out_hi_ = data_.states.topRows(n_t).colwise().maxCoeff().transpose();
        scaling_.scale = (out_hi_ - out_lo_).cwiseMax(1e-12);
        scaling_.offset = out_lo_;
    }
}

int Dataset::row_begin(Region r) const {
    switch (r) {
        case Region::train: return 0;
        case Region::validation: return split_.n_te;
        case Region::labeled: return 0;
        case Region::collocation: return split_.n_t();
        case Region::test: return split_.n_t() + split_.n_f;
    }
    throw Error("unreachable");
}

int Dataset::row_count(Region r) const {
    switch (r) {
        case Region::train: return split_.n_te;
        case Region::validation: return split_.n_ve;
        case Region::labeled: return split_.n_t();
        case Region::collocation: return split_.n_f;
        case Region::test: return split_.n_test;
    }
    throw Error("unreachable");
}

Matrix Dataset::esn_rows(const Matrix& phys, const Vector& lo, const Vector& hi, int begin,
                         int count) const {
    Matrix block = phys.middleRows(begin, count);
    if (!normalized_) return block;
    const Eigen::ArrayXd span = (hi - lo).cwiseMax(1e-12).array();
    return ((block.array().rowwise() - lo.transpose().array()).rowwise() / span.transpose());
}

Matrix Dataset::esn_inputs(Region r) const {
    return esn_rows(data_.inputs, in_lo_, in_hi_, row_begin(r), row_count(r));
}

Matrix Dataset::phys_inputs(Region r) const {
    return data_.inputs.middleRows(row_begin(r), row_count(r));
}

Matrix Dataset::labels(Region r) const {
    if (r == Region::collocation || r == Region::test)
        throw GuardError("withheld labels requested through a training accessor");
    return esn_rows(data_.states, out_lo_, out_hi_, row_begin(r), row_count(r));
}

Matrix Dataset::evaluation_labels(Region r) const {
    return esn_rows(data_.states, out_lo_, out_hi_, row_begin(r), row_count(r));
}

TrainView Dataset::train_view() const {
    TrainView v;
    v.train_inputs = esn_inputs(Region::labeled);
    v.train_targets = labels(Region::labeled);
    v.colloc_inputs = esn_inputs(Region::collocation);
    v.colloc_inputs_phys = phys_inputs(Region::collocation);
    v.scaling = scaling_;
    v.dt = data_.dt;
    // Default selection slice: the validation rows when present, else the
    // trailing quarter of the labeled region.
    v.n_val = split_.n_ve > 0 ? split_.n_ve : split_.n_t() / 4;
    return v;
}

json Dataset::metadata() const {
    json meta;
    meta["dt"] = data_.dt;
    meta["inputs"] = data_.input_names;
    meta["states"] = data_.state_names;
    meta["split"] = {{"train", split_.n_te},
                     {"validation", split_.n_ve},
                     {"collocation", split_.n_f},
                     {"test", split_.n_test}};
    meta["normalized"] = normalized_;
    if (normalized_) {
        auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        meta["normalization"] = {{"input_min", vec(in_lo_)},
                                 {"input_max", vec(in_hi_)},
                                 {"output_min", vec(out_lo_)},
                                 {"output_max", vec(out_hi_)}};
    }
    return meta;
}

void Dataset::save(const std::string& csv_path) const {
    write_timeseries_csv(data_, csv_path);
    std::ofstream meta(csv_path + ".meta.json");
    if (!meta) throw IoError("cannot open for writing: " + csv_path + ".meta.json");
    meta << metadata().dump(2) << '\n';
}

Dataset Dataset::load(const std::string& csv_path) {
    std::ifstream meta_in(csv_path + ".meta.json");
    if (!meta_in) throw IoError("missing metadata sidecar: " + csv_path + ".meta.json");
    json meta = json::parse(meta_in);

    const auto input_names = meta.at("inputs").get<std::vector<std::string>>();
    const auto state_names = meta.at("states").get<std::vector<std::string>>();
    TimeSeries ts = read_timeseries_csv(csv_path, input_names, state_names);
    ts.dt = meta.at("dt").get<double>();

    SplitSpec split;
    split.n_te = meta.at("split").at("train").get<int>();
    split.n_ve = meta.at("split").at("validation").get<int>();
    split.n_f = meta.at("split").at("collocation").get<int>();
    split.n_test = meta.at("split").at("test").get<int>();

    return Dataset(std::move(ts), split, meta.value("normalized", false));
}

Dataset make_dataset(const OdeSystem& sys, const SignalSpec& signal, const SplitSpec& split,
                     double dt, const Vector& y0, bool normalize) {
    split.validate();
    TimeSeries ts;
    ts.dt = dt;
    ts.inputs = generate_signal(signal, split.total());
    if (ts.inputs.cols() != sys.dim_u())
        throw ConfigError("signal channels do not match the system's input dimension");
    ts.states = simulate_euler(sys, y0, ts.inputs, dt);
    for (int c = 0; c < sys.dim_u(); ++c) ts.input_names.push_back("u" + std::to_string(c + 1));
    for (int c = 0; c < sys.dim_y(); ++c) ts.state_names.push_back("y" + std::to_string(c + 1));
    return Dataset(std::move(ts), split, normalize);
}

}  // namespace piesn
