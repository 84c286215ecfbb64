// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Criteria 5 and 6 train the shipped configs over five seeds
// and take about a minute.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clseg/checkpoint.hpp"
#include "clseg/cli/commands.hpp"
#include "clseg/cli/config.hpp"
#include "clseg/importance.hpp"
#include "clseg/log.hpp"
#include "clseg/metrics.hpp"
#include "clseg/regularization.hpp"
#include "clseg/trainer.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace clseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

cli::ExperimentConfig shipped_config(const std::string& strategy, const fs::path& output_dir) {
    cli::ConfigOverrides o;
    o.output_dir = output_dir;
    return cli::load_config(fs::path(CLSEG_CONFIG_DIR) / (strategy + ".toml"), o);
}

// ---------------------------------------------------------------------------
// 1. gradients

double relative_gap(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

Outcome gradient_correctness() {
    SegNetConfig cfg;
    cfg.encoder_channels = {2, 3};
    cfg.bottleneck_channels = 4;
    cfg.num_classes = 3;
    double worst_loss = 0.0, worst_penalty = 0.0, worst_total = 0.0;
    std::size_t coordinates = 0;

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        cfg.dropout_rate = seed % 2 ? 0.2 : 0.0;
        SegNet net(cfg, seed);
        auto& params = net.params();
        // Zero biases put dead channels exactly on the ReLU kink, where central
        // differences see the average of both slopes. Check at a generic point.
        for (auto& e : params.entries())
            if (e.role == ParamRole::bias)
                for (double& v : e.tensor.data()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
        const Tensor x = testing::random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
        std::vector<int> labels(2 * 64);
        std::uniform_int_distribution<int> cls(0, 2);
        for (int& l : labels) l = cls(rng);

        const ParameterStore anchor = [&] {
            ParameterStore a = params.snapshot();
            for (auto& e : a.entries())
                for (double& v : e.tensor.data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
            return a;
        }();
        ImportanceMap omega = ImportanceMap::uniform(params, 0.0);
        for (auto& e : omega.entries)
            for (double& v : e.values) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const std::size_t total = params.total_parameters();
        const double lambda = 1e4;

        // The dropout stream restarts for every evaluation so each one sees the same masks.
        auto data_loss = [&](bool backward) {
            std::mt19937_64 masks(seed + 1000);
            Graph g;
            const Var l = ops::cross_entropy_loss(
                g, ops::softmax_channel(g, net.forward(g, g.constant(x), cfg.dropout_rate > 0 ? &masks : nullptr)),
                labels);
            if (backward) g.backward(l);
            return g.value(l)[0];
        };
        auto penalty = [&] { return surrogate_penalty(params, anchor, omega, lambda, total).penalty; };

        params.set_requires_grad(true);
        params.zero_grad();
        data_loss(true);
        const PerParameter analytic = params.gradients();
        const PerParameter analytic_penalty = surrogate_penalty(params, anchor, omega, lambda, total).gradient;

        for (std::size_t p = 0; p < params.size(); ++p) {
            auto values = params.entries()[p].tensor.data();
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double saved = values[i];
                constexpr double h = 1e-6;
                values[i] = saved + h;
                const double up = data_loss(false), pen_up = penalty();
                values[i] = saved - h;
                const double down = data_loss(false), pen_down = penalty();
                values[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double numeric_penalty = (pen_up - pen_down) / (2 * h);
                worst_loss = std::max(worst_loss, relative_gap(analytic[p][i], numeric));
                worst_penalty = std::max(worst_penalty, relative_gap(analytic_penalty[p][i], numeric_penalty));
                worst_total = std::max(worst_total, relative_gap(analytic[p][i] + analytic_penalty[p][i],
                                                                 numeric + numeric_penalty));
                ++coordinates;
            }
        }
    }
    Outcome o;
    o.pass = worst_loss < 1e-4 && worst_total < 1e-4 && worst_penalty < 1e-6;
    o.detail = fmt("network loss max rel err %.2e, penalty %.2e, loss+penalty %.2e", worst_loss, worst_penalty,
                   worst_total) +
               " over " + std::to_string(coordinates) + " coordinates";
    return o;
}

// ---------------------------------------------------------------------------
// 2. metrics oracle

Outcome metric_oracle() {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const TrainTestMatrix r = testing::random_matrix(rng);
        worst = std::max(worst, testing::max_metric_gap(cl_metrics(r), testing::brute_force_metrics(r)));
    }
    // Hand-evaluated values; the divisions are written in the order a person
    // would evaluate them on paper.
    const CLMetrics a = cl_metrics(TrainTestMatrix(2, {0.9, 0.5, 0.9, 0.8}));
    const CLMetrics b = cl_metrics(TrainTestMatrix(2, {0.8, 0.3, 0.6, 0.75}));
    const bool hand_a = a.REM == 1.0 && a.BWT_plus == 0.0 && a.TL == (0.9 + 0.8) / 2 &&
                        a.CL_DSC == (0.9 + 0.8 + 0.9) / 3 && a.FWT == 0.5;
    const bool hand_b = b.REM == 1.0 - std::abs(0.6 - 0.8) && b.BWT_plus == 0.0 && b.TL == (0.8 + 0.75) / 2 &&
                        b.CL_DSC == (0.8 + 0.75 + 0.6) / 3 && b.FWT == 0.3;
    Outcome o;
    o.pass = worst <= 1e-12 && hand_a && hand_b;
    o.detail = fmt("max gap to brute force %.2e over 1000 matrices; hand matrices ", worst) +
               (hand_a && hand_b ? "exact" : "MISMATCH");
    return o;
}

// ---------------------------------------------------------------------------
// 3. strategy equivalences

Outcome strategy_equivalences() {
    const auto cfg = shipped_config("fine_tune", "unused");
    TrainSchedule schedule = cfg.schedule;
    schedule.seed = cfg.base_seed;
    const testing::SecondDomainScenario sc(cfg.network, schedule, cfg.benchmark.suite_seed, cfg.benchmark.image_size);
    const ParameterStore fine = sc.second(StrategyConfig::defaults(StrategyKind::fine_tune), {});

    std::vector<std::pair<std::string, bool>> checks;
    StrategyConfig mas = StrategyConfig::defaults(StrategyKind::mas);
    mas.lambda = 0.0;
    checks.emplace_back("mas(lambda=0)==fine_tune", testing::bit_identical(sc.second(mas, sc.with_omega(sc.omega)), fine));

    const ImportanceMap zeros = ImportanceMap::uniform(sc.after_first, 0.0);
    const ImportanceMap ones = ImportanceMap::uniform(sc.after_first, 1.0);
    const StrategyConfig mas_lr = StrategyConfig::defaults(StrategyKind::mas_lr);
    checks.emplace_back("mas_lr(omega=0)==fine_tune", testing::bit_identical(sc.second(mas_lr, sc.with_omega(zeros)), fine));
    checks.emplace_back("mas_lr(omega=1) unchanged",
                        testing::bit_identical(sc.second(mas_lr, sc.with_omega(ones)), sc.after_first));

    DomainState frozen = sc.with_omega(ones);
    frozen.freeze_mask = build_freeze_mask(ones, sc.after_first, std::nullopt, 1.0, 0.05);
    checks.emplace_back("mas_fix(100% frozen) unchanged",
                        frozen.freeze_mask->frozen_fraction == 1.0 &&
                            testing::bit_identical(sc.second(StrategyConfig::defaults(StrategyKind::mas_fix), frozen),
                                                   sc.after_first));

    StrategyConfig dropout = StrategyConfig::defaults(StrategyKind::dropout);
    dropout.dropout_rate = 0.0;
    checks.emplace_back("dropout(0)==fine_tune", testing::bit_identical(sc.second(dropout, {}), fine));
    StrategyConfig l2 = StrategyConfig::defaults(StrategyKind::l2);
    l2.l2_coefficient = 0.0;
    checks.emplace_back("l2(0)==fine_tune", testing::bit_identical(sc.second(l2, {}), fine));

    Outcome o;
    o.pass = !testing::bit_identical(fine, sc.after_first);
    std::string failed;
    for (const auto& [name, ok] : checks) {
        o.pass = o.pass && ok;
        if (!ok) failed += " " + name;
    }
    o.detail = o.pass ? std::to_string(checks.size()) + " equivalences bit-exact on the default network and suite"
                      : "failed:" + failed;
    return o;
}

// ---------------------------------------------------------------------------
// 4. importance pipeline

double block_mean(const std::vector<const std::vector<double>*>& parts) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto* v : parts) {
        for (double x : *v) sum += x;
        n += v->size();
    }
    return sum / static_cast<double>(n);
}

double worst_layer_mean_shift(const ImportanceMap& before, const ImportanceMap& after, const ParameterStore& layout) {
    std::map<std::string, std::vector<std::size_t>> layers;
    for (std::size_t p = 0; p < layout.size(); ++p) layers[layout.entries()[p].layer].push_back(p);
    double worst = 0.0;
    for (const auto& [layer, idx] : layers) {
        std::vector<const std::vector<double>*> a, b;
        for (auto p : idx) {
            a.push_back(&before.entries[p].values);
            b.push_back(&after.entries[p].values);
        }
        worst = std::max(worst, std::abs(block_mean(a) - block_mean(b)));
    }
    return worst;
}

Outcome importance_properties() {
    const auto cfg = shipped_config("mas", "unused");
    TrainSchedule schedule = cfg.schedule;
    schedule.seed = cfg.base_seed;
    const auto suite = default_four_domain_suite(cfg.benchmark.suite_seed, cfg.benchmark.image_size);
    SegNet net(cfg.network, schedule.seed);
    const auto fine = StrategyConfig::defaults(StrategyKind::fine_tune);

    bool in_range = true;
    double worst_mean_shift = 0.0, worst_accumulate = 0.0;
    std::vector<ImportanceMap> per_task;
    std::optional<ImportanceMap> running;
    for (std::size_t d = 0; d < suite.size(); ++d) {
        train_domain(net, suite[d].train, fine, schedule, {}, {d + 1, d == 0});
        std::vector<Tensor> inputs;
        for (const auto& img : suite[d].train.images)
            inputs.push_back(img.reshaped({1, 1, cfg.benchmark.image_size, cfg.benchmark.image_size}));
        const ImportanceMap normalized =
            normalize_unit(clip_outliers_iqr(compute_raw_importance(net, inputs)));
        for (Granularity g : {Granularity::parameter, Granularity::kernel, Granularity::filter}) {
            const ImportanceMap out =
                g == Granularity::parameter ? normalized : aggregate(normalized, net.params(), g);
            for (const auto& e : out.entries)
                for (double v : e.values) in_range = in_range && v >= 0.0 && v <= 1.0;
            if (g != Granularity::parameter)
                worst_mean_shift = std::max(worst_mean_shift, worst_layer_mean_shift(normalized, out, net.params()));
        }
        per_task.push_back(normalized);
        running = accumulate(running, normalized, d + 1);
        for (std::size_t p = 0; p < running->entries.size(); ++p) {
            for (std::size_t i = 0; i < running->entries[p].values.size(); ++i) {
                double sum = 0.0;
                for (const auto& m : per_task) sum += m.entries[p].values[i];
                worst_accumulate = std::max(worst_accumulate,
                                            std::abs(running->entries[p].values[i] - sum / static_cast<double>(per_task.size())));
            }
        }
    }

    ParameterStore five;
    five.add("v", "v", ParamRole::bias, Tensor({5}));
    ImportanceMap hand = ImportanceMap::uniform(five, 0.0, Granularity::parameter, false);
    hand.entries[0].values = {0, 1, 2, 3, 100};
    const bool iqr_hand = clip_outliers_iqr(hand).entries[0].values == std::vector<double>{0, 1, 2, 3, 6};

    Outcome o;
    o.pass = in_range && iqr_hand && worst_accumulate <= 1e-12 && worst_mean_shift <= 1e-12;
    o.detail = std::string("range ") + (in_range ? "ok" : "VIOLATED") + ", IQR hand example " +
               (iqr_hand ? "ok" : "MISMATCH") +
               fmt(", accumulate vs keep-all mean %.2e, per-layer mean shift %.2e", worst_accumulate, worst_mean_shift);
    return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. desk-scale orderings and forgetting, from the shipped configs

struct StrategyRuns {
    double rem = 0.0, tl = 0.0;
    std::vector<TrainTestMatrix> matrices;
};

StrategyRuns run_shipped(const std::string& strategy, const fs::path& root) {
    const auto cfg = shipped_config(strategy, root / strategy);
    const fs::path manifest = cli::cmd_run(cfg);
    const auto doc = nlohmann::json::parse(slurp(manifest));
    const auto aggregate =
        nlohmann::json::parse(slurp(manifest.parent_path() / doc["aggregate_metrics"].get<std::string>()));
    StrategyRuns r;
    r.rem = aggregate["metrics"]["REM"]["mean"].get<double>();
    r.tl = aggregate["metrics"]["TL"]["mean"].get<double>();
    for (const auto& run : doc["runs"]) r.matrices.push_back(read_matrix_csv(manifest.parent_path() / run["R"].get<std::string>()));
    return r;
}

std::map<std::string, StrategyRuns>& shipped_runs() {
    static std::map<std::string, StrategyRuns> runs;
    if (runs.empty()) {
        testing::TempDir dir("acceptance_runs");
        for (const char* s : {"fine_tune", "joint", "mas", "mas_lr", "mas_fix", "mas_lr_dropout"})
            runs[s] = run_shipped(s, dir.path());
    }
    return runs;
}

Outcome desk_orderings() {
    auto& runs = shipped_runs();
    const double ft = runs["fine_tune"].rem, joint = runs["joint"].rem, lr = runs["mas_lr"].rem,
                 fix = runs["mas_fix"].rem, mas = runs["mas"].rem;
    bool pass = joint >= lr && lr >= ft + 0.01 && fix >= ft + 0.01 && mas >= ft;
    std::string tl_detail;
    for (const char* s : {"mas", "mas_lr", "mas_fix", "mas_lr_dropout"}) {
        pass = pass && runs[s].tl >= runs["fine_tune"].tl - 0.05;
        tl_detail += " " + std::string(s) + "=" + fmt("%.4f", runs[s].tl);
    }
    Outcome o;
    o.pass = pass;
    o.detail = fmt("REM joint %.4f, mas_lr %.4f, mas_fix %.4f, mas %.4f", joint, lr, fix, mas) +
               fmt(", fine_tune %.4f; TL fine_tune %.4f,", ft, runs["fine_tune"].tl) + tl_detail;
    return o;
}

Outcome forgetting_gate() {
    const auto& matrices = shipped_runs()["fine_tune"].matrices;
    const std::size_t d = matrices.front().domains();
    TrainTestMatrix mean(d, std::vector<double>(d * d, 0.0));
    for (const auto& m : matrices)
        for (std::size_t k = 0; k < d * d; ++k) mean(k / d, k % d) += m.values()[k] / static_cast<double>(matrices.size());
    double drop = -1.0;
    std::size_t at_i = 0, at_j = 0;
    for (std::size_t i = 1; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (mean(j, j) - mean(i, j) > drop) {
                drop = mean(j, j) - mean(i, j);
                at_i = i;
                at_j = j;
            }
    Outcome o;
    o.pass = drop >= 0.02;
    o.detail = fmt("largest mean drop %.4f at R[%g][%g] over ", drop, static_cast<double>(at_i + 1),
                   static_cast<double>(at_j + 1)) +
               std::to_string(matrices.size()) + " seeds";
    return o;
}

// ---------------------------------------------------------------------------
// 7. determinism of the command-line runner

Outcome cli_determinism() {
    testing::TempDir dir("acceptance_cli");
    std::string config = slurp(fs::path(CLSEG_CONFIG_DIR) / "mas_lr.toml");
    const auto pos = config.find("num_seeds = 5");
    if (pos == std::string::npos) return {false, "shipped mas_lr config lacks num_seeds = 5"};
    config.replace(pos, 13, "num_seeds = 2");
    {
        std::ofstream out(dir / "config.toml", std::ios::binary);
        out << config;
    }
    for (const char* name : {"first", "second"}) {
        const std::string cmd = std::string("\"") + CLSEG_BINARY + "\" run \"" + (dir / "config.toml").string() +
                                "\" --quiet --output-dir \"" + (dir / name).string() + "\"";
        if (std::system(cmd.c_str()) != 0) return {false, std::string("run ") + name + " failed"};
    }
    bool same = true;
    std::size_t files = 0;
    for (const char* seed : {"seed_1", "seed_2"}) {
        for (const char* file : {"R.csv", "metrics.json"}) {
            const std::string a = slurp(dir / "first" / seed / file);
            same = same && !a.empty() && a == slurp(dir / "second" / seed / file);
            ++files;
        }
    }
    return {same, std::to_string(files) + (same ? " files byte-identical across two runs" : " files compared, MISMATCH")};
}

// ---------------------------------------------------------------------------
// 8. persistence

Outcome persistence() {
    testing::TempDir dir("acceptance_persist");
    auto cfg = shipped_config("mas_fix", dir / "full");
    const auto data = cli::load_benchmark(cfg.benchmark);
    TrainSchedule schedule = cfg.schedule;
    schedule.seed = cfg.base_seed;
    fs::create_directories(dir / "full");
    fs::create_directories(dir / "resumed");

    bool datasets_ok = true;
    for (std::size_t d = 0; d < data.train.size(); ++d) {
        for (const auto* ds : {&data.train[d], &data.eval[d]}) {
            save_dataset(*ds, dir / "ds.bin");
            const DomainDataset back = load_dataset(dir / "ds.bin");
            datasets_ok = datasets_ok && back == *ds;
            for (std::size_t i = 0; i < ds->size(); ++i)
                datasets_ok = datasets_ok && testing::same_bits(back.images[i].data(), ds->images[i].data());
        }
    }

    bool checkpoints_ok = true, resume_ok = true;
    std::size_t compared = 0;
    for (const char* strategy : {"mas_fix", "mas_lr", "mas"}) {
        const auto c = shipped_config(strategy, dir / "unused");
        SequenceOptions opt;
        opt.network = c.network;
        opt.checkpoint_dir = dir / "full";
        const SequenceResult full = run_sequence(data.train, data.eval, c.strategy, schedule, opt);

        for (const auto& path : full.checkpoints) {
            const Checkpoint ck = load_checkpoint(path);
            save_checkpoint(ck, dir / "copy.ckpt");
            checkpoints_ok = checkpoints_ok && slurp(path) == slurp(dir / "copy.ckpt");
            const Checkpoint again = load_checkpoint(dir / "copy.ckpt");
            checkpoints_ok = checkpoints_ok && testing::bit_identical(ck.params, again.params) &&
                             ck.importance == again.importance && ck.freeze == again.freeze;
        }

        opt.checkpoint_dir = dir / "resumed";
        opt.resume_from = full.checkpoints[1];
        const SequenceResult resumed = run_sequence(data.train, data.eval, c.strategy, schedule, opt);
        for (std::size_t i = 2; i < full.results.domains(); ++i) {
            for (std::size_t j = 0; j < full.results.domains(); ++j) {
                resume_ok = resume_ok && testing::same_bits(full.results(i, j), resumed.results(i, j));
                ++compared;
            }
        }
    }
    Outcome o;
    o.pass = datasets_ok && checkpoints_ok && resume_ok;
    o.detail = std::string("datasets ") + (datasets_ok ? "bit-exact" : "MISMATCH") + ", checkpoints " +
               (checkpoints_ok ? "bit-exact" : "MISMATCH") + ", resumed R entries " +
               (resume_ok ? "bit-exact" : "MISMATCH") + " (" + std::to_string(compared) + " entries, 3 strategies)";
    return o;
}

} // namespace

int main() {
    log::set_level(log::Level::warning);
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        double budget_seconds;
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness", gradient_correctness, 120.0},
        {2, "metric oracle equivalence", metric_oracle, 0.0},
        {3, "strategy equivalences", strategy_equivalences, 0.0},
        {4, "importance pipeline properties", importance_properties, 0.0},
        {5, "desk-scale orderings", desk_orderings, 1800.0},
        {6, "forgetting inducibility", forgetting_gate, 0.0},
        {7, "run determinism", cli_determinism, 0.0},
        {8, "persistence", persistence, 0.0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && seconds >= c.budget_seconds) {
            o.pass = false;
            o.detail += fmt(" (over the %.0f s budget)", c.budget_seconds);
        }
        std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
