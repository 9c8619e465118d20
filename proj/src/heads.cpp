#include "wordloc/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void affine_rows(const Matrix& z, const Linear& lin, Matrix& out) {
    out = Matrix(z.rows, lin.weight.rows);
    for (std::size_t t = 0; t < z.rows; ++t) {
        const auto zr = z.row(t);
        for (std::size_t k = 0; k < lin.weight.rows; ++k) {
            const auto wr = lin.weight.row(k);
            double acc = lin.bias[k];
            for (std::size_t j = 0; j < zr.size(); ++j) acc += wr[j] * zr[j];
            out(t, k) = acc;
        }
    }
}

double safe_ratio(double num, std::size_t den) { return den == 0 ? 0.0 : num / static_cast<double>(den); }

void check_label_shape(std::span<const Label> y, const Matrix& m) {
    if (y.size() != m.rows * m.cols) fail("label/prediction shape mismatch");
}

} // namespace

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

HeadParams::HeadParams(int classes, std::size_t feature_dim)
    : detection(static_cast<std::size_t>(classes), feature_dim),
      offset(static_cast<std::size_t>(classes), feature_dim),
      length(static_cast<std::size_t>(classes), feature_dim),
      classifier(static_cast<std::size_t>(classes) + 1, feature_dim) {}

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask) {
    if (logits.size() != mask.size() || logits.empty()) fail("masked_softmax: shape mismatch");
    if (!mask.back()) fail("masked_softmax: negative class must stay unmasked");
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (mask[i]) peak = std::max(peak, logits[i]);
    }
    std::vector<double> p(logits.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!mask[i]) continue;
        p[i] = std::exp(logits[i] - peak);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

HeadOutputs forward_heads(const Matrix& z, const HeadParams& params, std::span<const std::uint8_t> detection_gate,
                          std::span<const int> teacher_classes) {
    const int c = params.classes();
    if (z.cols != params.feature_dim()) fail("feature dimension does not match head parameters");
    if (params.classifier.weight.rows != static_cast<std::size_t>(c) + 1) fail("classifier must have c+1 rows");
    if (!detection_gate.empty() && detection_gate.size() != z.rows * static_cast<std::size_t>(c)) {
        fail("detection gate shape mismatch");
    }
    if (!teacher_classes.empty() && teacher_classes.size() != z.rows) fail("teacher class count mismatch");

    HeadOutputs out;
    affine_rows(z, params.detection, out.detection_logits);
    affine_rows(z, params.offset, out.o_hat);
    affine_rows(z, params.length, out.l_hat);
    affine_rows(z, params.classifier, out.class_logits);

    const std::size_t n = z.rows;
    const std::size_t cw = static_cast<std::size_t>(c) + 1;
    out.y_hat = Matrix(n, static_cast<std::size_t>(c));
    out.s_hat = Matrix(n, cw);
    out.mask.assign(n * cw, 0);
    for (std::size_t t = 0; t < n; ++t) {
        for (int w = 0; w < c; ++w) {
            const double y = sigmoid(out.detection_logits(t, w));
            out.y_hat(t, w) = y;
            const bool gate = detection_gate.empty() ? y >= 0.5 : detection_gate[t * c + w] != 0;
            out.mask[t * cw + w] = gate ? 1 : 0;
        }
        out.mask[t * cw + c] = 1;
        if (!teacher_classes.empty()) out.mask[t * cw + static_cast<std::size_t>(teacher_classes[t])] = 1;
        const auto p = masked_softmax(out.class_logits.row(t), {out.mask.data() + t * cw, cw});
        std::copy(p.begin(), p.end(), out.s_hat.row(t).begin());
    }
    return out;
}

double loss_pos(std::span<const Label> y, const Matrix& detection_logits) {
    check_label_shape(y, detection_logits);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != Label::Positive) continue;
        sum += softplus(-detection_logits.data[i]);
        ++count;
    }
    return safe_ratio(sum, count);
}

double loss_neg(std::span<const Label> y, const Matrix& detection_logits) {
    check_label_shape(y, detection_logits);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != Label::Negative) continue;
        sum += softplus(detection_logits.data[i]);
        ++count;
    }
    return safe_ratio(sum, count);
}

namespace {

double l1_positive(const TargetTensors& targets, const std::vector<double>& truth, const Matrix& pred) {
    check_label_shape(targets.y, pred);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < targets.y.size(); ++i) {
        if (targets.y[i] != Label::Positive) continue;
        sum += std::abs(truth[i] - pred.data[i]);
        ++count;
    }
    return safe_ratio(sum, count);
}

double ce_term(const Matrix& s_hat, std::size_t t, int cls) {
    return -std::log(std::max(s_hat(t, static_cast<std::size_t>(cls)), kClassifierEpsilon));
}

} // namespace

double loss_offset(const TargetTensors& targets, const Matrix& o_hat) { return l1_positive(targets, targets.o, o_hat); }

double loss_length(const TargetTensors& targets, const Matrix& l_hat) { return l1_positive(targets, targets.l, l_hat); }

double loss_classifier(std::span<const int> s, const Matrix& s_hat) {
    if (s.size() != s_hat.rows) fail("classifier label count mismatch");
    double sum = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t) {
        if (s[t] < 0 || static_cast<std::size_t>(s[t]) >= s_hat.cols) fail("classifier label out of range");
        sum += ce_term(s_hat, t, s[t]);
    }
    return safe_ratio(sum, s.size());
}

LossBreakdown total_loss(const TargetTensors& targets, const HeadOutputs& outputs) {
    return partial_loss(targets, outputs, LossNormalizers::of(targets));
}

LossNormalizers LossNormalizers::of(const TargetTensors& targets) {
    return {targets.positives(), targets.negatives(), targets.segments};
}

LossBreakdown partial_loss(const TargetTensors& targets, const HeadOutputs& outputs, const LossNormalizers& norms) {
    if (targets.segments != outputs.segments() || targets.classes != outputs.classes()) {
        fail("targets and head outputs disagree in shape");
    }
    double pos = 0.0, neg = 0.0, off = 0.0, len = 0.0, cls = 0.0;
    for (std::size_t i = 0; i < targets.y.size(); ++i) {
        const double a = outputs.detection_logits.data[i];
        switch (targets.y[i]) {
        case Label::Positive:
            pos += softplus(-a);
            off += std::abs(targets.o[i] - outputs.o_hat.data[i]);
            len += std::abs(targets.l[i] - outputs.l_hat.data[i]);
            break;
        case Label::Negative:
            neg += softplus(a);
            break;
        case Label::DontCare:
            break;
        }
    }
    for (std::size_t t = 0; t < targets.segments; ++t) cls += ce_term(outputs.s_hat, t, targets.s[t]);

    LossBreakdown out;
    out.pos = safe_ratio(pos, norms.positives);
    out.neg = safe_ratio(neg, norms.negatives);
    out.offset = safe_ratio(off, norms.positives);
    out.length = safe_ratio(len, norms.positives);
    out.classifier = safe_ratio(cls, norms.segments);
    return out;
}

namespace {

double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// grads += g^T z (weights), sum of g (bias); grad_z += g W.
void linear_backward(const Matrix& z, const Linear& lin, const Matrix& g, Linear& grad, Matrix& grad_z) {
    for (std::size_t t = 0; t < z.rows; ++t) {
        const auto zr = z.row(t);
        auto gz = grad_z.row(t);
        for (std::size_t k = 0; k < g.cols; ++k) {
            const double gk = g(t, k);
            if (gk == 0.0) continue;
            grad.bias[k] += gk;
            auto gw = grad.weight.row(k);
            const auto wr = lin.weight.row(k);
            for (std::size_t j = 0; j < zr.size(); ++j) {
                gw[j] += gk * zr[j];
                gz[j] += gk * wr[j];
            }
        }
    }
}

} // namespace

void heads_backward(const Matrix& z, const HeadParams& params, const HeadOutputs& outputs,
                    const TargetTensors& targets, const LossNormalizers& norms, HeadParams& grads,
                    Matrix& grad_z) {
    const std::size_t n = outputs.segments();
    const std::size_t c = static_cast<std::size_t>(outputs.classes());
    const std::size_t cw = c + 1;
    Matrix g_det(n, c), g_off(n, c), g_len(n, c), g_cls(n, cw);

    const double inv_pos = norms.positives ? 1.0 / static_cast<double>(norms.positives) : 0.0;
    const double inv_neg = norms.negatives ? 1.0 / static_cast<double>(norms.negatives) : 0.0;
    const double inv_seg = norms.segments ? 1.0 / static_cast<double>(norms.segments) : 0.0;

    for (std::size_t i = 0; i < targets.y.size(); ++i) {
        const double y = outputs.y_hat.data[i];
        switch (targets.y[i]) {
        case Label::Positive:
            g_det.data[i] = (y - 1.0) * inv_pos;
            g_off.data[i] = sign(outputs.o_hat.data[i] - targets.o[i]) * inv_pos;
            g_len.data[i] = sign(outputs.l_hat.data[i] - targets.l[i]) * inv_pos;
            break;
        case Label::Negative:
            g_det.data[i] = y * inv_neg;
            break;
        case Label::DontCare:
            break;
        }
    }
    for (std::size_t t = 0; t < n; ++t) {
        const auto truth = static_cast<std::size_t>(targets.s[t]);
        // A masked-out true class contributes a constant -log(eps).
        if (!outputs.mask[t * cw + truth]) continue;
        for (std::size_t k = 0; k < cw; ++k) {
            if (!outputs.mask[t * cw + k]) continue;
            g_cls(t, k) = (outputs.s_hat(t, k) - (k == truth ? 1.0 : 0.0)) * inv_seg;
        }
    }

    if (!grad_z.same_shape(z)) grad_z = Matrix(z.rows, z.cols);
    linear_backward(z, params.detection, g_det, grads.detection, grad_z);
    linear_backward(z, params.offset, g_off, grads.offset, grad_z);
    linear_backward(z, params.length, g_len, grads.length, grad_z);
    linear_backward(z, params.classifier, g_cls, grads.classifier, grad_z);
}

} // namespace wordloc
