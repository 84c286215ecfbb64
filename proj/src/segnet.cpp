#include "clseg/segnet.hpp"

#include <cmath>
#include <string>

#include "clseg/error.hpp"
#include "clseg/rng.hpp"

namespace clseg {

void SegNetConfig::validate() const {
    if (in_channels < 1) throw ConfigError("network.in_channels", "must be >= 1");
    if (num_classes < 2) throw ConfigError("network.num_classes", "must be >= 2");
    if (encoder_channels.empty()) throw ConfigError("network.encoder_channels", "must list at least one stage");
    for (auto c : encoder_channels) {
        if (c < 1) throw ConfigError("network.encoder_channels", "all channel counts must be >= 1");
    }
    if (bottleneck_channels < 1) throw ConfigError("network.bottleneck_channels", "must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("network.dropout_rate", "must be in [0,1)");
}

namespace {

Tensor he_uniform(std::size_t out, std::size_t in, std::size_t k, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in * k * k));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t({out, in, k, k});
    for (double& v : t.data()) v = dist(rng);
    return t;
}

void add_conv(ParameterStore& store, const std::string& layer, std::size_t out, std::size_t in, std::size_t k,
              std::mt19937_64& rng) {
    store.add(layer + ".weight", layer, ParamRole::conv_weight, he_uniform(out, in, k, rng));
    store.add(layer + ".bias", layer, ParamRole::bias, Tensor({out}, 0.0));
}

template <class Store>
Var forward_impl(Store& store, const SegNetConfig& cfg, Graph& g, Var input, std::mt19937_64* rng) {
    std::size_t next = 0;
    auto conv = [&](Var x) {
        auto& w = store.entries()[next++].tensor;
        auto& b = store.entries()[next++].tensor;
        return ops::conv2d(g, x, g.parameter(w), g.parameter(b));
    };
    const double rate = rng != nullptr ? cfg.dropout_rate : 0.0;
    auto drop = [&](Var x) { return rate > 0.0 ? ops::dropout(g, x, rate, *rng) : x; };

    std::vector<Var> skips;
    Var x = input;
    for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
        x = ops::relu(g, conv(x));
        skips.push_back(x);
        x = ops::maxpool2x2(g, x);
    }
    x = drop(ops::relu(g, conv(x)));
    for (std::size_t i = cfg.encoder_channels.size(); i-- > 0;) {
        x = ops::upsample2x2_nearest(g, x);
        x = drop(ops::relu(g, conv(x)));
        x = ops::add(g, x, skips[i]);
    }
    return conv(x);
}

} // namespace

SegNet::SegNet(SegNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    auto rng = make_rng(seed, {0x1417});
    std::size_t channels = config_.in_channels;
    for (std::size_t i = 0; i < config_.encoder_channels.size(); ++i) {
        add_conv(params_, "enc" + std::to_string(i), config_.encoder_channels[i], channels, 3, rng);
        channels = config_.encoder_channels[i];
    }
    add_conv(params_, "bottleneck", config_.bottleneck_channels, channels, 3, rng);
    channels = config_.bottleneck_channels;
    for (std::size_t i = config_.encoder_channels.size(); i-- > 0;) {
        add_conv(params_, "dec" + std::to_string(i), config_.encoder_channels[i], channels, 3, rng);
        channels = config_.encoder_channels[i];
    }
    add_conv(params_, "head", config_.num_classes, channels, 1, rng);
    params_.set_requires_grad(true);
}

void SegNet::check_input(const Tensor& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != config_.in_channels) {
        throw ShapeError("segnet: input must be [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                         shape_string(batch.shape()));
    }
    const std::size_t d = config_.spatial_divisor();
    if (batch.dim(2) % d != 0 || batch.dim(3) % d != 0) {
        throw ShapeError("segnet: H and W must be divisible by " + std::to_string(d) + " (2^" +
                         std::to_string(config_.encoder_channels.size()) + " encoder stages), got " +
                         shape_string(batch.shape()));
    }
}

Var SegNet::forward(Graph& g, Var input, std::mt19937_64* dropout_rng) {
    check_input(g.value(input));
    return forward_impl(params_, config_, g, input, dropout_rng);
}

Var SegNet::forward(Graph& g, Var input, std::mt19937_64* dropout_rng) const {
    check_input(g.value(input));
    return forward_impl(params_, config_, g, input, dropout_rng);
}

Tensor SegNet::predict(const Tensor& batch, bool dropout_active, std::mt19937_64* rng) const {
    if (dropout_active && config_.dropout_rate > 0.0 && rng == nullptr) {
        throw Error("segnet: dropout_active requires an rng");
    }
    Graph g(false);
    Var logits = forward(g, g.constant(batch), dropout_active ? rng : nullptr);
    return g.value(ops::softmax_channel(g, logits));
}

std::vector<int> argmax_channel(const Tensor& probs) {
    const std::size_t n = probs.dim(0), c = probs.dim(1), plane = probs.dim(2) * probs.dim(3);
    std::vector<int> out(n * plane);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < plane; ++p) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < c; ++k) {
                if (probs[(b * c + k) * plane + p] > probs[(b * c + best) * plane + p]) best = k;
            }
            out[b * plane + p] = static_cast<int>(best);
        }
    }
    return out;
}

} // namespace clseg
