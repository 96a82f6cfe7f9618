#include "piesn/timeseries.hpp"

#include <fstream>
#include <sstream>

namespace piesn {

void write_timeseries_csv(const TimeSeries& ts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "time";
    for (const auto& n : ts.input_names) out << ',' << n;
    for (const auto& n : ts.state_names) out << ',' << n;
    out << '\n';
    for (int t = 0; t < ts.length(); ++t) {
        out << format_double(t * ts.dt);
        for (int c = 0; c < ts.n_u(); ++c) out << ',' << format_double(ts.inputs(t, c));
        for (int c = 0; c < ts.n_y(); ++c) out << ',' << format_double(ts.states(t, c));
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) fields.push_back(item);
    return fields;
}

}  // namespace

TimeSeries read_timeseries_csv(const std::string& path,
                               const std::vector<std::string>& input_names,
                               const std::vector<std::string>& state_names) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV: " + path);
    const auto header = split_line(line);
    const size_t expected = 1 + input_names.size() + state_names.size();
    if (header.size() != expected)
        throw IoError(path + ": header has " + std::to_string(header.size()) +
                      " columns, metadata expects " + std::to_string(expected));

    std::vector<std::vector<double>> rows;
    double t0 = 0.0, t1 = 0.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != expected) throw IoError(path + ": ragged row " + std::to_string(rows.size()));
        std::vector<double> row(expected);
        for (size_t i = 0; i < expected; ++i) row[i] = std::stod(fields[i]);
        if (rows.empty()) t0 = row[0];
        if (rows.size() == 1) t1 = row[0];
        rows.push_back(std::move(row));
    }

    TimeSeries ts;
    ts.input_names = input_names;
    ts.state_names = state_names;
    ts.dt = rows.size() > 1 ? t1 - t0 : 1.0;
    const int n_u = static_cast<int>(input_names.size());
    const int n_y = static_cast<int>(state_names.size());
    ts.inputs.resize(static_cast<int>(rows.size()), n_u);
    ts.states.resize(static_cast<int>(rows.size()), n_y);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < n_u; ++c) ts.inputs(static_cast<int>(r), c) = rows[r][1 + c];
        for (int c = 0; c < n_y; ++c) ts.states(static_cast<int>(r), c) = rows[r][1 + n_u + c];
    }
    return ts;
}

}  // namespace piesn
