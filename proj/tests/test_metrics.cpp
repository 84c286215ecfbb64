#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "clseg/error.hpp"
#include "clseg/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace clseg;

namespace {

std::string format_error(const std::string& csv) {
    try {
        parse_matrix_csv(csv);
    } catch (const FormatError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("dice_score: worked examples") {
    const std::vector<int> gt = {0, 1, 1, 2, 2, 0};
    const DiceResult same = dice_score(gt, gt, 3);
    CHECK(same.mean == 1.0);
    CHECK(same.scored_classes == 3);

    // class 1: |P| = 4, |G| = 4, overlap 2
    const std::vector<int> truth = {1, 1, 1, 1, 0, 0, 0, 0};
    const std::vector<int> pred = {1, 1, 0, 0, 1, 1, 0, 0};
    CHECK(dice_score(pred, truth, 2).per_class[1] == 0.5);

    const std::vector<int> a = {1, 1, 0, 0};
    const std::vector<int> b = {0, 0, 1, 1};
    CHECK(dice_score(a, b, 2).per_class[1] == 0.0);

    // class 2 absent from both maps is left out of the mean
    const DiceResult absent = dice_score(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 3);
    CHECK(std::isnan(absent.per_class[2]));
    CHECK(absent.scored_classes == 2);

    // predicted but missing from the ground truth scores 0
    const DiceResult spurious = dice_score(std::vector<int>{0, 2}, std::vector<int>{0, 0}, 3);
    CHECK(spurious.per_class[2] == 0.0);
    CHECK(spurious.mean == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(dice_score(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ShapeError);
    CHECK_THROWS_AS(dice_score(std::vector<int>{3}, std::vector<int>{0}, 2), Error);
}

TEST_CASE("dice_score: structures only, background excluded") {
    const std::vector<int> truth = {0, 0, 1, 1, 2, 2};
    const std::vector<int> pred = {0, 0, 1, 1, 2, 0};
    const DiceResult r = dice_score(pred, truth, 4, false);
    CHECK(r.scored_classes == 2);
    CHECK(r.mean == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));

    // a spurious class 3 prediction does not enter the structure mean
    const std::vector<int> extra = {3, 0, 1, 1, 2, 2};
    CHECK(dice_score(extra, truth, 4, false).mean == 1.0);

    CHECK(dice_score(std::vector<int>{0, 0}, std::vector<int>{0, 0}, 3, false).mean == 1.0);
    CHECK(dice_score(std::vector<int>{0, 1}, std::vector<int>{0, 0}, 3, false).mean == 0.0);
}

TEST_CASE("cl_metrics: hand-evaluated matrices") {
    const CLMetrics m = cl_metrics(TrainTestMatrix(2, {0.9, 0.5, 0.9, 0.8}));
    CHECK(m.REM == 1.0);
    CHECK(m.BWT_plus == 0.0);
    CHECK(m.TL == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(m.CL_DSC == doctest::Approx(2.6 / 3.0).epsilon(1e-15));
    CHECK(m.FWT == 0.5);

    const CLMetrics n = cl_metrics(TrainTestMatrix(2, {0.8, 0.3, 0.6, 0.75}));
    CHECK(n.REM == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(n.BWT_plus == 0.0);
    CHECK(n.TL == doctest::Approx(0.775).epsilon(1e-15));
    CHECK(n.CL_DSC == doctest::Approx(2.15 / 3.0).epsilon(1e-15));
    CHECK(n.FWT == 0.3);

    for (std::size_t d = 2; d <= 6; ++d) {
        const CLMetrics c = cl_metrics(TrainTestMatrix(d, std::vector<double>(d * d, 0.625)));
        CHECK(c.REM == 1.0);
        CHECK(c.BWT_plus == 0.0);
        CHECK(c.TL == 0.625);
        CHECK(c.CL_DSC == 0.625);
        CHECK(c.FWT == 0.625);
    }

    const CLMetrics up = cl_metrics(TrainTestMatrix(2, {0.5, 0.1, 0.7, 0.9}));
    CHECK(up.BWT_plus == doctest::Approx(0.2));
    CHECK(up.REM == 1.0);
}

TEST_CASE("cl_metrics: errors") {
    CHECK_THROWS_AS(cl_metrics(TrainTestMatrix(1, {0.5})), Error);
    CHECK_THROWS_AS(cl_metrics(TrainTestMatrix(2)), Error);
    CHECK_THROWS_AS(cl_metrics(TrainTestMatrix(2, {0.5, 0.5, 1.5, 0.5})), Error);
    CHECK_THROWS_AS(TrainTestMatrix(2, {0.5, 0.5, 0.5}), ShapeError);
}

TEST_CASE("cl_metrics: brute-force oracle, ranges and REM/BWT characterization") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 2000; ++trial) {
        const TrainTestMatrix r = testing::random_matrix(rng);
        const CLMetrics m = cl_metrics(r);
        CHECK(testing::max_metric_gap(m, testing::brute_force_metrics(r)) <= 1e-12);

        CHECK(m.REM >= 0.0);
        CHECK(m.REM <= 1.0);
        CHECK(m.BWT_plus >= 0.0);
        for (double v : {m.TL, m.CL_DSC, m.FWT}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }

        bool any_below = false, any_above = false;
        for (std::size_t i = 1; i < r.domains(); ++i)
            for (std::size_t j = 0; j < i; ++j) {
                any_below |= r(i, j) < r(j, j);
                any_above |= r(i, j) > r(j, j);
            }
        CHECK((m.REM == 1.0) == !any_below);
        CHECK((m.BWT_plus > 0.0) == any_above);
    }
}

TEST_CASE("matrix csv: round trip and row diagnostics") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const TrainTestMatrix r = testing::random_matrix(rng);
        const TrainTestMatrix back = parse_matrix_csv(matrix_csv(r));
        CHECK(back.domains() == r.domains());
        CHECK(testing::same_bits(back.values(), r.values()));
    }

    const TrainTestMatrix r(2, {0.9, 0.5, 0.9, 0.8});
    CHECK(matrix_csv(r) == "domain_1,domain_2\n0.9,0.5\n0.9,0.8\n");
    testing::TempDir dir("metrics");
    write_matrix_csv(r, dir / "R.csv");
    CHECK(read_matrix_csv(dir / "R.csv") == r);

    CHECK(format_error("a,b\n0.9,0.5\n0.9\n").find("row 3 has 1 fields") != std::string::npos);
    CHECK(format_error("a\n0.5\n").find("D must be >= 2") != std::string::npos);
    CHECK(format_error("a,b\n0.9,x\n0.9,0.8\n").find("row 2") != std::string::npos);
    CHECK(format_error("a,b\n0.9,1.5\n0.9,0.8\n").find("row 2") != std::string::npos);
    CHECK(format_error("a,b\n0.9,0.5\n").find("data rows") != std::string::npos);
    CHECK(format_error("").find("empty") != std::string::npos);
    CHECK_THROWS_AS(read_matrix_csv(dir / "missing.csv"), FormatError);
}

TEST_CASE("metrics json: round trip and missing keys") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const CLMetrics m = cl_metrics(testing::random_matrix(rng));
        const CLMetrics back = parse_metrics_json(metrics_json(m));
        CHECK(testing::same_bits(back.REM, m.REM));
        CHECK(testing::same_bits(back.TL, m.TL));
        CHECK(testing::same_bits(back.FWT, m.FWT));
        CHECK(testing::same_bits(back.CL_DSC, m.CL_DSC));
        CHECK(testing::same_bits(back.BWT_plus, m.BWT_plus));
    }
    CHECK_THROWS_AS(parse_metrics_json(R"({"REM": 1})"), FormatError);
    CHECK_THROWS_AS(parse_metrics_json("not json"), FormatError);
}
