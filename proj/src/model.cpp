#include "wordloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

template <class P, class Span, class Fn>
void visit_blocks(P& params, Fn&& fn) {
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        auto& layer = params.backbone[i];
        const std::string prefix = "backbone." + std::to_string(i);
        fn(prefix + ".weight", Span(layer.weight));
        fn(prefix + ".bias", Span(layer.bias));
    }
    auto head = [&](const std::string& name, auto& lin) {
        fn("head." + name + ".weight", Span(lin.weight.data));
        fn("head." + name + ".bias", Span(lin.bias));
    };
    head("detection", params.heads.detection);
    head("offset", params.heads.offset);
    head("length", params.heads.length);
    head("classifier", params.heads.classifier);
}

} // namespace

void for_each_block(Parameters& params, const std::function<void(const std::string&, std::span<double>)>& fn) {
    visit_blocks<Parameters, std::span<double>>(params, fn);
}

void for_each_block(const Parameters& params,
                    const std::function<void(const std::string&, std::span<const double>)>& fn) {
    visit_blocks<const Parameters, std::span<const double>>(params, fn);
}

std::size_t parameter_count(const Parameters& params) {
    std::size_t n = 0;
    for_each_block(params, [&](const std::string&, std::span<const double> b) { n += b.size(); });
    return n;
}

Parameters zeros_like(const Parameters& params) {
    Parameters out = params;
    for_each_block(out, [](const std::string&, std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
    return out;
}

Model make_model(const BackboneSpec& spec, const Lexicon& lexicon, int sample_rate, std::uint64_t seed) {
    if (lexicon.size() < 1) fail("model needs a non-empty lexicon");
    Model m;
    m.spec = spec;
    m.lexicon = lexicon;
    m.sample_rate = sample_rate;
    m.params.backbone = init_backbone_params(spec, seed);
    m.params.heads = HeadParams(lexicon.size(), spec.feature_dim());

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(spec.feature_dim())));
    auto init = [&](Linear& lin) {
        for (auto& w : lin.weight.data) w = static_cast<float>(dist(rng));
    };
    init(m.params.heads.detection);
    init(m.params.heads.offset);
    init(m.params.heads.length);
    init(m.params.heads.classifier);
    return m;
}

HeadOutputs model_forward(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
                          std::span<const std::uint8_t> detection_gate) {
    const Matrix z = backbone_forward(spec, params.backbone, signal);
    return forward_heads(z, params.heads, detection_gate);
}

LossBreakdown loss_and_gradient(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
                                const TargetTensors& targets, const LossNormalizers& norms,
                                const LossOptions& options, Parameters& grads) {
    BackboneTrace trace;
    const Matrix z = backbone_forward(spec, params.backbone, signal, &trace);
    const auto outputs = forward_heads(z, params.heads, options.detection_gate,
                                       options.teacher_forcing ? std::span<const int>(targets.s)
                                                               : std::span<const int>());
    const auto loss = partial_loss(targets, outputs, norms);
    Matrix grad_z;
    heads_backward(z, params.heads, outputs, targets, norms, grads.heads, grad_z);
    backbone_backward(spec, params.backbone, trace, grad_z, grads.backbone);
    return loss;
}

namespace {

struct Probe {
    double loss;
    // Which branch of each piecewise-linear piece is active: ReLU units
    // (a zero output marks the inactive side) and L1 residual signs.
    std::vector<std::int8_t> kinks;
};

Probe evaluate(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
               const TargetTensors& targets, std::span<const std::uint8_t> gate) {
    BackboneTrace trace;
    const Matrix z = backbone_forward(spec, params.backbone, signal, &trace);
    const auto out = forward_heads(z, params.heads, gate);
    Probe probe{total_loss(targets, out).total(), {}};
    for (std::size_t li = 0; li < spec.layers().size(); ++li) {
        if (spec.layers()[li].activation != Activation::Relu) continue;
        for (double v : trace.activations[li + 1].data) probe.kinks.push_back(v > 0.0 ? 1 : 0);
    }
    for (std::size_t i = 0; i < targets.y.size(); ++i) {
        if (targets.y[i] != Label::Positive) continue;
        probe.kinks.push_back(out.o_hat.data[i] > targets.o[i] ? 1 : -1);
        probe.kinks.push_back(out.l_hat.data[i] > targets.l[i] ? 1 : -1);
    }
    return probe;
}

} // namespace

GradCheckReport grad_check(const BackboneSpec& spec, const Parameters& params, std::span<const double> signal,
                           const TargetTensors& targets, const GradCheckOptions& options) {
    // Freeze the mask at the base point.
    const auto base = model_forward(spec, params, signal);
    std::vector<std::uint8_t> gate(base.segments() * static_cast<std::size_t>(base.classes()));
    const std::size_t cw = static_cast<std::size_t>(base.classes()) + 1;
    for (std::size_t t = 0; t < base.segments(); ++t) {
        for (int w = 0; w < base.classes(); ++w) gate[t * base.classes() + w] = base.mask[t * cw + w];
    }

    Parameters grads = zeros_like(params);
    LossOptions lo;
    lo.detection_gate = gate;
    loss_and_gradient(spec, params, signal, targets, LossNormalizers::of(targets), lo, grads);

    struct Slot {
        std::string block;
        std::size_t index;
    };
    std::vector<Slot> slots;
    for_each_block(params, [&](const std::string& name, std::span<const double> b) {
        for (std::size_t i = 0; i < b.size(); ++i) slots.push_back({name, i});
    });
    if (options.max_parameters && options.max_parameters < slots.size()) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(slots.begin(), slots.end(), rng);
        slots.resize(options.max_parameters);
    }

    const auto base_kinks = evaluate(spec, params, signal, targets, gate).kinks;
    Parameters probe = params;
    std::vector<std::pair<std::string, std::span<double>>> probe_blocks;
    std::vector<std::pair<std::string, std::span<double>>> grad_blocks;
    for_each_block(probe, [&](const std::string& n, std::span<double> b) { probe_blocks.emplace_back(n, b); });
    for_each_block(grads, [&](const std::string& n, std::span<double> b) { grad_blocks.emplace_back(n, b); });
    auto find = [](auto& blocks, const std::string& name) -> std::span<double> {
        for (auto& [n, b] : blocks) {
            if (n == name) return b;
        }
        fail("unknown parameter block " + name);
    };

    GradCheckReport report;
    for (const auto& slot : slots) {
        auto block = find(probe_blocks, slot.block);
        const double analytic = find(grad_blocks, slot.block)[slot.index];
        const double original = block[slot.index];
        double numeric = 0.0;
        double h = options.step;
        for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
            block[slot.index] = original + h;
            const auto plus = evaluate(spec, probe, signal, targets, gate);
            block[slot.index] = original - h;
            const auto minus = evaluate(spec, probe, signal, targets, gate);
            numeric = (plus.loss - minus.loss) / (2.0 * h);
            if (plus.kinks == base_kinks && minus.kinks == base_kinks) break;
        }
        block[slot.index] = original;

        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.checked;
        if (rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_block = slot.block + "[" + std::to_string(slot.index) + "]";
        }
    }
    return report;
}

} // namespace wordloc
