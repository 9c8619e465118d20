#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wordloc/backbone.hpp"
#include "wordloc/heads.hpp"
#include "wordloc/labeling.hpp"

namespace wordloc {

struct Parameters {
    BackboneParams backbone;
    HeadParams heads;
};

Parameters zeros_like(const Parameters& params);

// Visits every parameter array in a fixed declared order. The order defines
// the checkpoint layout and the flat index used by the optimizer.
void for_each_block(Parameters& params, const std::function<void(const std::string&, std::span<double>)>& fn);
void for_each_block(const Parameters& params,
                    const std::function<void(const std::string&, std::span<const double>)>& fn);
std::size_t parameter_count(const Parameters& params);

struct Model {
    BackboneSpec spec;
    Lexicon lexicon;
    int sample_rate = 16000;
    Parameters params;

    FrameGeometry geometry() const { return spec.geometry(); }
};

Model make_model(const BackboneSpec& spec, const Lexicon& lexicon, int sample_rate, std::uint64_t seed);

HeadOutputs model_forward(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
                          std::span<const std::uint8_t> detection_gate = {});

struct LossOptions {
    // Force the true class into the classifier mask during training.
    bool teacher_forcing = false;
    // Replaces the ŷ >= 0.5 mask when non-empty (n x c).
    std::span<const std::uint8_t> detection_gate = {};
};

// Forward + backward for one utterance. Gradients are accumulated into grads.
LossBreakdown loss_and_gradient(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
                                const TargetTensors& targets, const LossNormalizers& norms,
                                const LossOptions& options, Parameters& grads);

struct GradCheckOptions {
    double step = 1e-5;
    // Relative errors use max(|analytic|, |numeric|, floor) as denominator.
    double denominator_floor = 1e-4;
    // 0 checks every parameter; otherwise a seeded random subset.
    std::size_t max_parameters = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::string worst_block;
};

// Compares analytic gradients of the total loss with central differences.
// The classifier mask is frozen at the unperturbed point. When a ReLU or L1
// kink falls inside the stencil the step is shrunk until it does not.
GradCheckReport grad_check(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
                           const TargetTensors& targets, const GradCheckOptions& options = {});

} // namespace wordloc
