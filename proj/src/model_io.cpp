#include "piesn/model_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace piesn {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    // Row-major nested arrays.
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw IoError("model file: " + what + " is not a matrix");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j.at(0).size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const json& row = j.at(r);
        if (static_cast<int>(row.size()) != cols) throw IoError("model file: ragged " + what);
        for (int c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
    }
    return m;
}

}  // namespace

void save_model(const ModelFile& m, const std::string& path) {
    json j;
    j["format"] = "piesn-model";
    j["version"] = 1;
    const auto& cfg = m.reservoir.cfg;
    j["config"] = {{"n_x", cfg.n_x},         {"n_u", cfg.n_u},           {"n_y", cfg.n_y},
                   {"alpha", cfg.alpha},     {"rho_star", cfg.rho_star}, {"delta_in", cfg.delta_in},
                   {"delta_fb", cfg.delta_fb}, {"delta_b", cfg.delta_b}, {"seed", cfg.seed}};
    j["w_in"] = matrix_to_json(m.reservoir.w_in);
    j["w"] = matrix_to_json(m.reservoir.w);
    j["w_fb"] = matrix_to_json(m.reservoir.w_fb);
    j["w_b"] = std::vector<double>(m.reservoir.w_b.data(),
                                   m.reservoir.w_b.data() + m.reservoir.w_b.size());
    j["w_out"] = matrix_to_json(m.readout.w_out);
    if (m.adaptive) j["adaptive"] = {{"s_d", m.adaptive->s_d}, {"s_f", m.adaptive->s_f}};

    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("model file parse error: " + std::string(e.what()));
    }
    if (j.value("format", "") != "piesn-model") throw IoError("not a piesn model file: " + path);

    ModelFile m;
    const json& c = j.at("config");
    m.reservoir.cfg.n_x = c.at("n_x").get<int>();
    m.reservoir.cfg.n_u = c.at("n_u").get<int>();
    m.reservoir.cfg.n_y = c.at("n_y").get<int>();
    m.reservoir.cfg.alpha = c.at("alpha").get<double>();
    m.reservoir.cfg.rho_star = c.at("rho_star").get<double>();
    m.reservoir.cfg.delta_in = c.at("delta_in").get<double>();
    m.reservoir.cfg.delta_fb = c.at("delta_fb").get<double>();
    m.reservoir.cfg.delta_b = c.at("delta_b").get<double>();
    m.reservoir.cfg.seed = c.at("seed").get<std::uint64_t>();

    m.reservoir.w_in = matrix_from_json(j.at("w_in"), "w_in");
    m.reservoir.w = matrix_from_json(j.at("w"), "w");
    m.reservoir.w_fb = matrix_from_json(j.at("w_fb"), "w_fb");
    const auto wb = j.at("w_b").get<std::vector<double>>();
    m.reservoir.w_b = Eigen::Map<const Vector>(wb.data(), static_cast<int>(wb.size()));
    m.reservoir.alpha = m.reservoir.cfg.alpha;
    m.readout.w_out = matrix_from_json(j.at("w_out"), "w_out");

    if (j.contains("adaptive"))
        m.adaptive = AdaptiveLossState{j.at("adaptive").at("s_d").get<double>(),
                                       j.at("adaptive").at("s_f").get<double>()};

    if (m.reservoir.w.rows() != m.reservoir.cfg.n_x ||
        m.reservoir.w_in.rows() != m.reservoir.cfg.n_x ||
        m.readout.w_out.cols() != m.reservoir.cfg.n_x)
        throw IoError("model file: inconsistent dimensions");
    return m;
}

}  // namespace piesn
