#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wordloc/labeling.hpp"
#include "wordloc/tensor.hpp"

namespace wordloc {

// Affine map y = W z + b, W stored out x in.
struct Linear {
    Matrix weight;
    std::vector<double> bias;

    Linear() = default;
    Linear(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}
};

struct HeadParams {
    Linear detection;  // c x d
    Linear offset;     // c x d
    Linear length;     // c x d
    Linear classifier; // (c+1) x d

    HeadParams() = default;
    HeadParams(int classes, std::size_t feature_dim);

    int classes() const noexcept { return static_cast<int>(detection.weight.rows); }
    std::size_t feature_dim() const noexcept { return detection.weight.cols; }
};

struct HeadOutputs {
    Matrix detection_logits;  // n x c
    Matrix y_hat;             // n x c, sigmoid of detection_logits
    Matrix o_hat;             // n x c
    Matrix l_hat;             // n x c
    Matrix class_logits;      // n x (c+1), before masking
    Matrix s_hat;             // n x (c+1)
    std::vector<std::uint8_t> mask; // n x (c+1); last column always set

    std::size_t segments() const noexcept { return y_hat.rows; }
    int classes() const noexcept { return static_cast<int>(y_hat.cols); }
};

// Gate entries (n x c) are 1 where the word may compete in the classifier.
// Without an explicit gate the mask is y_hat >= 0.5. Classes listed in
// teacher_classes (one per segment) are forced into the mask.
HeadOutputs forward_heads(const Matrix& z, const HeadParams& params,
                          std::span<const std::uint8_t> detection_gate = {},
                          std::span<const int> teacher_classes = {});

// Softmax restricted to entries with mask set; masked-out entries get
// exactly 0. The last entry (negative class) must be set.
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask);

double sigmoid(double x) noexcept;

// Detection losses take logits so BCE can be evaluated as softplus.
double loss_pos(std::span<const Label> y, const Matrix& detection_logits);
double loss_neg(std::span<const Label> y, const Matrix& detection_logits);
double loss_offset(const TargetTensors& targets, const Matrix& o_hat);
double loss_length(const TargetTensors& targets, const Matrix& l_hat);
double loss_classifier(std::span<const int> s, const Matrix& s_hat);

struct LossBreakdown {
    double pos = 0.0;
    double neg = 0.0;
    double offset = 0.0;
    double length = 0.0;
    double classifier = 0.0;

    double total() const noexcept { return pos + neg + offset + length + classifier; }
    LossBreakdown& operator+=(const LossBreakdown& o) noexcept {
        pos += o.pos;
        neg += o.neg;
        offset += o.offset;
        length += o.length;
        classifier += o.classifier;
        return *this;
    }
};

LossBreakdown total_loss(const TargetTensors& targets, const HeadOutputs& outputs);

// Denominators of the five losses. For a minibatch they are pooled over all
// utterances so per-utterance contributions add up to the batch loss.
struct LossNormalizers {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t segments = 0;

    static LossNormalizers of(const TargetTensors& targets);
    LossNormalizers& operator+=(const LossNormalizers& o) noexcept {
        positives += o.positives;
        negatives += o.negatives;
        segments += o.segments;
        return *this;
    }
};

// Loss contribution of one utterance under shared normalizers. An empty
// denominator makes the corresponding term 0.
LossBreakdown partial_loss(const TargetTensors& targets, const HeadOutputs& outputs, const LossNormalizers& norms);

// Accumulates d(partial_loss)/d(params) into grads and writes d/dz into
// grad_z. The classifier mask is treated as a constant.
void heads_backward(const Matrix& z, const HeadParams& params, const HeadOutputs& outputs,
                    const TargetTensors& targets, const LossNormalizers& norms, HeadParams& grads,
                    Matrix& grad_z);

// Floor applied to a masked-out true-class probability before the log.
inline constexpr double kClassifierEpsilon = 1e-12;

} // namespace wordloc
