#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wordloc/geometry.hpp"
#include "wordloc/tensor.hpp"

namespace wordloc {

enum class Activation { Relu, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// One valid (unpadded) 1-D convolution.
struct ConvLayerSpec {
    int channels = 1;
    int kernel = 1;
    int stride = 1;
    int dilation = 1;
    Activation activation = Activation::Relu;

    // Number of input frames one output frame reads.
    int span() const noexcept { return (kernel - 1) * dilation + 1; }
    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

class BackboneSpec {
public:
    BackboneSpec() = default;
    explicit BackboneSpec(std::vector<ConvLayerSpec> layers, int input_channels = 1);

    // Small dilated stack used for the synthetic corpus: R = 393, S = 16, d = 32.
    static BackboneSpec reference();

    const std::vector<ConvLayerSpec>& layers() const noexcept { return layers_; }
    int input_channels() const noexcept { return input_channels_; }
    std::int64_t receptive_field() const noexcept { return receptive_field_; }
    std::int64_t stride() const noexcept { return stride_; }
    std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(layers_.back().channels); }
    FrameGeometry geometry() const { return {receptive_field_, stride_}; }
    int layer_input_channels(std::size_t layer) const;

    // Compact text form, e.g. "16:9:4:1:relu,32:5:2:2:relu".
    std::string describe() const;
    static BackboneSpec parse(const std::string& text);

    friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;

private:
    std::vector<ConvLayerSpec> layers_;
    int input_channels_ = 1;
    std::int64_t receptive_field_ = 1;
    std::int64_t stride_ = 1;
};

// Weights laid out [kernel tap][input channel][output channel].
struct ConvParams {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    std::vector<double> weight;
    std::vector<double> bias;

    double& w(int tap, int in, int out) {
        return weight[(static_cast<std::size_t>(tap) * in_channels + in) * out_channels + out];
    }
};

using BackboneParams = std::vector<ConvParams>;

BackboneParams zero_backbone_params(const BackboneSpec& spec);
// He-normal weights for ReLU layers, unit-variance fan-in scaling otherwise.
BackboneParams init_backbone_params(const BackboneSpec& spec, std::uint64_t seed);

// Layer inputs/outputs kept for the backward pass. activations[0] is the
// signal as a T x 1 matrix; activations[i + 1] is the output of layer i.
struct BackboneTrace {
    std::vector<Matrix> activations;
};

Matrix backbone_forward(const BackboneSpec& spec, const BackboneParams& params, std::span<const double> signal,
                        BackboneTrace* trace = nullptr);

// Accumulates parameter gradients given dL/d(features).
void backbone_backward(const BackboneSpec& spec, const BackboneParams& params, const BackboneTrace& trace,
                       const Matrix& grad_features, BackboneParams& grads);

// Incremental evaluation over a sample stream. Each layer keeps only the
// input frames it still needs; row t is bitwise identical to row t of
// backbone_forward on the whole signal.
class StreamingBackbone {
public:
    StreamingBackbone(const BackboneSpec& spec, const BackboneParams& params);

    // Returns the feature rows completed by these samples.
    Matrix push(std::span<const double> samples);
    std::int64_t rows_emitted() const noexcept { return rows_emitted_; }
    std::int64_t samples_seen() const noexcept { return samples_seen_; }

private:
    struct LayerState {
        std::vector<double> frames; // buffered input frames, row-major
        std::int64_t first_frame = 0;
        std::int64_t next_output = 0;
    };

    const BackboneSpec* spec_;
    const BackboneParams* params_;
    std::vector<LayerState> state_;
    std::int64_t rows_emitted_ = 0;
    std::int64_t samples_seen_ = 0;
};

} // namespace wordloc
