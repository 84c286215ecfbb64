#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace clseg {

struct DiceResult {
    /// Per class; NaN for classes absent from both prediction and ground truth.
    std::vector<double> per_class;
    /// Mean over the classes that were scored.
    double mean = 0.0;
    std::size_t scored_classes = 0;
};

/// Per-class Dice 2|P∩G| / (|P|+|G|). Classes absent from both maps are
/// excluded from the mean; a class predicted but absent from the ground
/// truth scores 0. With include_background=false class 0 is never scored
/// and only classes present in the ground truth are averaged.
DiceResult dice_score(std::span<const int> pred, std::span<const int> truth, std::size_t num_classes,
                      bool include_background = true);

/// Train-test matrix: entry (i, j) is the score on domain j after training
/// through domain i. Rows not yet computed hold NaN.
class TrainTestMatrix {
public:
    TrainTestMatrix() = default;
    explicit TrainTestMatrix(std::size_t domains);
    TrainTestMatrix(std::size_t domains, std::vector<double> row_major);

    std::size_t domains() const noexcept { return d_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * d_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values_[i * d_ + j]; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool row_complete(std::size_t i) const;
    bool complete() const;
    std::size_t completed_rows() const;

    friend bool operator==(const TrainTestMatrix&, const TrainTestMatrix&) = default;

private:
    std::size_t d_ = 0;
    std::vector<double> values_;
};

struct CLMetrics {
    double TL = 0.0;
    double REM = 0.0;
    double BWT_plus = 0.0;
    double CL_DSC = 0.0;
    double FWT = 0.0;

    friend bool operator==(const CLMetrics&, const CLMetrics&) = default;
};

/// TL, REM, BWT+, CL DSC and FWT of a complete matrix with D >= 2.
CLMetrics cl_metrics(const TrainTestMatrix& r);

/// Header row of D column names followed by D rows of D values, written
/// with round-trip precision.
void write_matrix_csv(const TrainTestMatrix& r, const std::filesystem::path& path);
std::string matrix_csv(const TrainTestMatrix& r);
/// Throws FormatError naming the offending row (1-based, header is row 1).
TrainTestMatrix parse_matrix_csv(const std::string& text);
TrainTestMatrix read_matrix_csv(const std::filesystem::path& path);

/// Flat key-value JSON document.
std::string metrics_json(const CLMetrics& m);
CLMetrics parse_metrics_json(const std::string& text);

} // namespace clseg
