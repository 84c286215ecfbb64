#include "clseg/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "clseg/error.hpp"

namespace clseg {

DiceResult dice_score(std::span<const int> pred, std::span<const int> truth, std::size_t num_classes,
                      bool include_background) {
    if (pred.size() != truth.size()) {
        throw ShapeError("dice_score: prediction has " + std::to_string(pred.size()) + " labels, ground truth " +
                         std::to_string(truth.size()));
    }
    std::vector<std::size_t> p_count(num_classes, 0), g_count(num_classes, 0), overlap(num_classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], g = truth[i];
        if (p < 0 || g < 0 || static_cast<std::size_t>(p) >= num_classes || static_cast<std::size_t>(g) >= num_classes) {
            throw Error("dice_score: label outside [0," + std::to_string(num_classes) + ")");
        }
        ++p_count[static_cast<std::size_t>(p)];
        ++g_count[static_cast<std::size_t>(g)];
        if (p == g) ++overlap[static_cast<std::size_t>(p)];
    }

    DiceResult result;
    result.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
    double total = 0.0;
    bool any_predicted_fg = false;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (c > 0 && p_count[c] > 0) any_predicted_fg = true;
        if (p_count[c] + g_count[c] == 0) continue;
        result.per_class[c] =
            2.0 * static_cast<double>(overlap[c]) / static_cast<double>(p_count[c] + g_count[c]);
        const bool scored = include_background ? true : (c > 0 && g_count[c] > 0);
        if (scored) {
            total += result.per_class[c];
            ++result.scored_classes;
        }
    }
    if (result.scored_classes > 0) {
        result.mean = total / static_cast<double>(result.scored_classes);
    } else {
        // No structure in the ground truth: perfect iff nothing was predicted.
        result.mean = any_predicted_fg ? 0.0 : 1.0;
    }
    return result;
}

TrainTestMatrix::TrainTestMatrix(std::size_t domains)
    : d_(domains), values_(domains * domains, std::numeric_limits<double>::quiet_NaN()) {}

TrainTestMatrix::TrainTestMatrix(std::size_t domains, std::vector<double> row_major)
    : d_(domains), values_(std::move(row_major)) {
    if (values_.size() != d_ * d_) throw ShapeError("train-test matrix: expected D*D values");
}

bool TrainTestMatrix::row_complete(std::size_t i) const {
    for (std::size_t j = 0; j < d_; ++j) {
        if (std::isnan((*this)(i, j))) return false;
    }
    return true;
}

bool TrainTestMatrix::complete() const { return completed_rows() == d_; }

std::size_t TrainTestMatrix::completed_rows() const {
    std::size_t n = 0;
    while (n < d_ && row_complete(n)) ++n;
    return n;
}

CLMetrics cl_metrics(const TrainTestMatrix& r) {
    const std::size_t d = r.domains();
    if (d < 2) throw Error("cl_metrics: D must be >= 2");
    if (!r.complete()) throw Error("cl_metrics: matrix has unfilled entries");
    for (double v : r.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("cl_metrics: entries must lie in [0,1]");
    }

    CLMetrics m;
    double diag = 0.0, lower = 0.0, upper = 0.0, rem = 0.0, bwt = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        diag += r(i, i);
        for (std::size_t j = 0; j < i; ++j) {
            const double delta = r(i, j) - r(j, j);
            lower += r(i, j);
            rem += 1.0 - std::abs(std::min(delta, 0.0));
            bwt += std::max(delta, 0.0);
        }
        for (std::size_t j = i + 1; j < d; ++j) upper += r(i, j);
    }
    const double dd = static_cast<double>(d);
    const double pairs = dd * (dd - 1.0);
    m.TL = diag / dd;
    m.REM = 2.0 * rem / pairs;
    m.BWT_plus = 2.0 * bwt / pairs;
    m.CL_DSC = (diag + lower) / (dd * (dd + 1.0) / 2.0);
    m.FWT = upper / (pairs / 2.0);
    return m;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf, end);
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace

std::string matrix_csv(const TrainTestMatrix& r) {
    std::string out;
    for (std::size_t j = 0; j < r.domains(); ++j) out += (j ? "," : "") + ("domain_" + std::to_string(j + 1));
    out += "\n";
    for (std::size_t i = 0; i < r.domains(); ++i) {
        for (std::size_t j = 0; j < r.domains(); ++j) out += (j ? "," : "") + format_double(r(i, j));
        out += "\n";
    }
    return out;
}

void write_matrix_csv(const TrainTestMatrix& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_matrix_csv: cannot open " + path.string());
    out << matrix_csv(r);
    if (!out) throw Error("write_matrix_csv: write failed for " + path.string());
}

TrainTestMatrix parse_matrix_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) lines.push_back(line);
    }
    if (lines.empty()) throw FormatError("matrix csv: empty file");
    const std::size_t d = split_csv_row(lines[0]).size();
    if (d < 2) throw FormatError("matrix csv: D must be >= 2");
    if (lines.size() != d + 1) {
        throw FormatError("matrix csv: header declares D=" + std::to_string(d) + " but found " +
                          std::to_string(lines.size() - 1) + " data rows");
    }
    std::vector<double> values;
    for (std::size_t row = 1; row <= d; ++row) {
        const auto fields = split_csv_row(lines[row]);
        if (fields.size() != d) {
            throw FormatError("matrix csv: row " + std::to_string(row + 1) + " has " + std::to_string(fields.size()) +
                              " fields, expected " + std::to_string(d));
        }
        for (const auto& raw : fields) {
            const std::string f = trim(raw);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc{} || ptr != f.data() + f.size()) {
                throw FormatError("matrix csv: row " + std::to_string(row + 1) + " has non-numeric value '" + f + "'");
            }
            if (!(v >= 0.0 && v <= 1.0)) {
                throw FormatError("matrix csv: row " + std::to_string(row + 1) + " value outside [0,1]");
            }
            values.push_back(v);
        }
    }
    return TrainTestMatrix(d, std::move(values));
}

TrainTestMatrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("matrix csv: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_matrix_csv(buf.str());
}

std::string metrics_json(const CLMetrics& m) {
    nlohmann::ordered_json j;
    j["CL_DSC"] = m.CL_DSC;
    j["REM"] = m.REM;
    j["BWT_plus"] = m.BWT_plus;
    j["TL"] = m.TL;
    j["FWT"] = m.FWT;
    return j.dump(2) + "\n";
}

CLMetrics parse_metrics_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        CLMetrics m;
        m.CL_DSC = j.at("CL_DSC").get<double>();
        m.REM = j.at("REM").get<double>();
        m.BWT_plus = j.at("BWT_plus").get<double>();
        m.TL = j.at("TL").get<double>();
        m.FWT = j.at("FWT").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metrics json: ") + e.what());
    }
}

} // namespace clseg
