#include "clseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "clseg/checkpoint.hpp"
#include "clseg/log.hpp"
#include "clseg/rng.hpp"

namespace clseg {

void TrainSchedule::validate() const {
    if (epochs_per_domain < 1) throw ConfigError("schedule.epochs_per_domain", "must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("schedule.momentum", "must be in [0,1)");
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("schedule.initial_lr", "must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("schedule.decay_factor", "must be in (0,1]");
    if (decay_every_epochs < 1) throw ConfigError("schedule.decay_every_epochs", "must be >= 1");
    if (batch_size < 1) throw ConfigError("schedule.batch_size", "must be >= 1");
}

double TrainSchedule::base_lr(std::size_t epoch, bool decaying) const {
    const std::size_t e = decaying ? epoch : epochs_per_domain - 1;
    return initial_lr * std::pow(decay_factor, static_cast<double>(e / decay_every_epochs));
}

std::string format_epoch_record(const EpochRecord& r) {
    std::ostringstream out;
    out.precision(17);
    out << "domain=" << r.domain << " epoch=" << r.epoch << " step=" << r.step << " loss=" << r.loss
        << " base_lr=" << r.base_lr;
    return out.str();
}

namespace {

enum RngPurpose : std::uint64_t { shuffle = 11, dropout_mask = 12 };

struct Batch {
    Tensor images;
    std::vector<int> labels;
};

Batch make_batch(const DomainDataset& data, std::span<const std::size_t> indices) {
    const std::size_t plane = data.height * data.width;
    std::vector<double> pixels;
    Batch b;
    pixels.reserve(indices.size() * plane);
    b.labels.reserve(indices.size() * plane);
    for (auto i : indices) {
        pixels.insert(pixels.end(), data.images[i].data().begin(), data.images[i].data().end());
        b.labels.insert(b.labels.end(), data.labels[i].begin(), data.labels[i].end());
    }
    b.images = Tensor({indices.size(), 1, data.height, data.width}, std::move(pixels));
    return b;
}

PerParameter uniform_rates(const ParameterStore& params, double lr) {
    PerParameter rates;
    for (const auto& e : params.entries()) rates.emplace_back(e.tensor.size(), lr);
    return rates;
}

} // namespace

DomainTrainResult train_domain(SegNet& net, const DomainDataset& data, const StrategyConfig& strategy,
                               const TrainSchedule& schedule, const DomainState& state, const DomainContext& context) {
    strategy.validate();
    schedule.validate();
    if (data.size() == 0) throw Error("train_domain: empty dataset");
    if (context.domain > 1 && strategy.uses_importance() && !state.omega) {
        throw Error("train_domain: strategy " + std::string(strategy_name(strategy.kind)) +
                    " requires importance weights beyond the first domain");
    }
    if (strategy.uses_penalty() && state.omega && !state.theta_star) {
        throw Error("train_domain: mas requires the previous parameters theta*");
    }

    auto& params = net.params();
    params.set_requires_grad(true);
    const std::size_t total_params = params.total_parameters();

    const BaselineHooks baseline = apply_baseline(strategy.kind, strategy);
    const bool penalty_on = strategy.uses_penalty() && state.omega.has_value();
    const bool scale_on = strategy.scales_learning_rate() && state.omega.has_value();
    std::optional<FrozenFlags> frozen;
    if (state.freeze_mask) frozen = state.freeze_mask->aligned_to(params);

    auto shuffle_rng = make_rng(schedule.seed, {context.domain, RngPurpose::shuffle});
    auto dropout_rng = make_rng(schedule.seed, {context.domain, RngPurpose::dropout_mask});
    const double dropout_rate = baseline.dropout_rate;
    if (net.config().dropout_rate != dropout_rate) {
        throw Error("train_domain: network dropout rate does not match the strategy's");
    }

    DomainTrainResult result;
    result.optimizer = OptimizerState::zeros(params);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < schedule.epochs_per_domain; ++epoch) {
        const double base_lr = schedule.base_lr(epoch, context.decaying);
        const PerParameter rates =
            scale_on ? effective_learning_rates(*state.omega, params, base_lr) : uniform_rates(params, base_lr);
        // Zero-rate parameters are held like frozen ones so their velocity stays 0.
        std::optional<FrozenFlags> hold = frozen;
        if (scale_on) {
            if (!hold) {
                hold.emplace();
                for (const auto& r : rates) hold->emplace_back(r.size(), 0);
            }
            for (std::size_t p = 0; p < rates.size(); ++p) {
                for (std::size_t i = 0; i < rates[p].size(); ++i) {
                    if (rates[p][i] == 0.0) (*hold)[p][i] = 1;
                }
            }
        }

        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t end = std::min(order.size(), start + schedule.batch_size);
            Batch batch = make_batch(data, std::span(order).subspan(start, end - start));

            params.zero_grad();
            double loss = 0.0;
            try {
                Graph g;
                Var logits = net.forward(g, g.constant(std::move(batch.images)),
                                         dropout_rate > 0.0 ? &dropout_rng : nullptr);
                Var l = ops::cross_entropy_loss(g, ops::softmax_channel(g, logits), batch.labels);
                loss = g.value(l)[0];
                if (!std::isfinite(loss)) {
                    throw DivergenceError("train_domain: loss diverged at domain " + std::to_string(context.domain) +
                                          " epoch " + std::to_string(epoch + 1));
                }
                g.backward(l);
            } catch (const DivergenceError&) {
                throw;
            } catch (const NumericError& e) {
                throw DivergenceError(std::string(e.what()) + " (domain " + std::to_string(context.domain) +
                                      ", epoch " + std::to_string(epoch + 1) + ")");
            }
            PerParameter grads = params.gradients();
            if (penalty_on) {
                const auto pen = surrogate_penalty(params, *state.theta_star, *state.omega, strategy.lambda,
                                                   total_params);
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    for (std::size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += pen.gradient[p][i];
                }
            }
            add_l2_gradient(grads, params, baseline.l2_coefficient);
            try {
                sgd_momentum_step(params, grads, rates, schedule.momentum, result.optimizer,
                                  hold ? &*hold : nullptr);
            } catch (const NumericError& e) {
                throw DivergenceError(std::string(e.what()) + " (domain " + std::to_string(context.domain) +
                                      ", epoch " + std::to_string(epoch + 1) + ")");
            }
            loss_sum += loss;
            ++batches;
        }
        result.epochs.push_back({context.domain, epoch + 1, result.optimizer.steps,
                                 loss_sum / static_cast<double>(batches), base_lr});
        log::debug(format_epoch_record(result.epochs.back()));
    }
    return result;
}

double evaluate_dice(const SegNet& net, const DomainDataset& data) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Batch batch = make_batch(data, all);
    const std::vector<int> pred = argmax_channel(net.predict(batch.images));
    return dice_score(pred, batch.labels, data.num_classes, false).mean;
}

namespace {

std::vector<Tensor> training_inputs(const DomainDataset& data) {
    std::vector<Tensor> out;
    for (const auto& img : data.images) out.push_back(img.reshaped({1, 1, data.height, data.width}));
    return out;
}

} // namespace

SequenceResult run_sequence(std::span<const DomainDataset> train, std::span<const DomainDataset> eval,
                            const StrategyConfig& strategy, const TrainSchedule& schedule,
                            const SequenceOptions& options) {
    strategy.validate();
    schedule.validate();
    const std::size_t d = train.size();
    if (d < 2) throw Error("run_sequence: need at least 2 domains");
    if (eval.size() != d) throw Error("run_sequence: eval sets must align 1:1 with training domains");

    SegNetConfig net_cfg = options.network;
    net_cfg.dropout_rate = apply_baseline(strategy.kind, strategy).dropout_rate;
    SegNet net(net_cfg, schedule.seed);

    SequenceResult result;
    result.results = TrainTestMatrix(d);
    DomainState state;
    std::size_t first = 0;

    if (options.resume_from) {
        Checkpoint ckpt = load_checkpoint(*options.resume_from);
        if (!ckpt.progress || ckpt.progress->results.domains() != d) {
            throw Error("run_sequence: checkpoint " + options.resume_from->string() +
                        " does not describe a run over " + std::to_string(d) + " domains");
        }
        restore_parameters(net, ckpt.params);
        first = ckpt.progress->completed_domains;
        result.results = ckpt.progress->results;
        result.completed_domains = first;
        state.omega = ckpt.importance;
        state.freeze_mask = ckpt.freeze;
        if (strategy.uses_importance()) state.theta_star = net.params().snapshot();
        if (state.omega) result.importance_history.push_back(*state.omega);
    }

    std::ofstream log_file;
    if (options.log_path) {
        log_file.open(*options.log_path, first > 0 ? std::ios::app : std::ios::trunc);
        if (!log_file) throw Error("run_sequence: cannot open log " + options.log_path->string());
    }

    for (std::size_t i = first; i < d; ++i) {
        const std::size_t domain = i + 1;
        try {
            DomainTrainResult trained;
            if (strategy.kind == StrategyKind::joint) {
                net = SegNet(net_cfg, schedule.seed);
                const DomainDataset seen = merge_datasets(train.subspan(0, domain));
                trained = train_domain(net, seen, strategy, schedule, state, {domain, true});
            } else {
                trained = train_domain(net, train[i], strategy, schedule, state, {domain, i == 0});
            }
            for (const auto& rec : trained.epochs) {
                if (log_file) log_file << format_epoch_record(rec) << '\n';
                result.logs.push_back(rec);
            }

            if (strategy.uses_importance()) {
                const auto inputs = training_inputs(train[i]);
                ImportanceMap fresh = postprocess_importance(compute_raw_importance(net, inputs), net.params(),
                                                             strategy.importance_granularity);
                state.omega = accumulate(state.omega, fresh, domain);
                if (strategy.uses_freezing()) {
                    state.freeze_mask = build_freeze_mask(*state.omega, net.params(), state.freeze_mask,
                                                          strategy.beta_per_domain, strategy.min_importance_to_freeze);
                }
                state.theta_star = net.params().snapshot();
                result.importance_history.push_back(*state.omega);
            }

            for (std::size_t j = 0; j < d; ++j) result.results(i, j) = evaluate_dice(net, eval[j]);
            result.completed_domains = domain;

            if (options.checkpoint_dir) {
                Checkpoint ckpt;
                ckpt.params = net.params().snapshot();
                ckpt.importance = state.omega;
                ckpt.freeze = state.freeze_mask;
                ckpt.optimizer = trained.optimizer;
                ckpt.progress = SequenceProgress{domain, result.results};
                const auto path = *options.checkpoint_dir / ("domain_" + std::to_string(domain) + ".ckpt");
                save_checkpoint(ckpt, path);
                result.checkpoints.push_back(path);
            }
            log::info("domain " + std::to_string(domain) + " done");
        } catch (const Error& e) {
            throw SequenceFailure("run_sequence: domain " + std::to_string(domain) + ": " + e.what(), result);
        }
    }
    return result;
}

} // namespace clseg
