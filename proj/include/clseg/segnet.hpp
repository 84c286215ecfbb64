#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "clseg/autograd.hpp"
#include "clseg/param_store.hpp"

namespace clseg {

struct SegNetConfig {
    std::size_t in_channels = 1;
    std::size_t num_classes = 4;
    std::vector<std::size_t> encoder_channels{8, 16};
    std::size_t bottleneck_channels = 32;
    double dropout_rate = 0.0;

    void validate() const;
    /// Spatial extents must be multiples of this.
    std::size_t spatial_divisor() const { return std::size_t{1} << encoder_channels.size(); }
};

/// Small fully-convolutional encoder-decoder.
///
///   encoder stage i:  conv3x3 -> relu -> maxpool2x2      (output before pooling kept as skip)
///   bottleneck:       conv3x3 -> relu -> dropout
///   decoder stage i:  upsample2x2 -> conv3x3 -> relu -> dropout -> + skip_i
///   head:             conv1x1 -> num_classes logits
///
/// Parameter ids follow `<layer>.weight` / `<layer>.bias` with layers
/// enc0.., bottleneck, dec<i> (deepest first), head.
class SegNet {
public:
    SegNet(SegNetConfig config, std::uint64_t seed);

    const SegNetConfig& config() const noexcept { return config_; }
    ParameterStore& params() noexcept { return params_; }
    const ParameterStore& params() const noexcept { return params_; }

    /// Records the forward pass into `g` and returns the logits node.
    /// Dropout is applied when `dropout_rng` is non-null and the rate is positive.
    Var forward(Graph& g, Var input, std::mt19937_64* dropout_rng = nullptr);
    Var forward(Graph& g, Var input, std::mt19937_64* dropout_rng = nullptr) const;

    /// Class probabilities [N, num_classes, H, W].
    Tensor predict(const Tensor& batch, bool dropout_active = false, std::mt19937_64* rng = nullptr) const;

    /// Throws ShapeError unless the batch is [N, in_channels, H, W] with H, W
    /// divisible by spatial_divisor().
    void check_input(const Tensor& batch) const;

private:
    SegNetConfig config_;
    ParameterStore params_;
};

/// Per-pixel argmax over the channel axis; NHW order.
std::vector<int> argmax_channel(const Tensor& probs);

} // namespace clseg
