#include "wordloc/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "wordloc/error.hpp"

namespace wordloc {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "identity" || name == "linear") return Activation::Identity;
    fail("unknown activation '" + name + "'");
}

BackboneSpec::BackboneSpec(std::vector<ConvLayerSpec> layers, int input_channels)
    : layers_(std::move(layers)), input_channels_(input_channels) {
    if (layers_.empty()) fail("backbone needs at least one layer");
    if (input_channels_ < 1) fail("backbone input channels must be positive");
    for (const auto& l : layers_) {
        if (l.channels < 1 || l.kernel < 1 || l.stride < 1 || l.dilation < 1) {
            fail("backbone layer fields must be positive");
        }
        receptive_field_ += static_cast<std::int64_t>(l.kernel - 1) * l.dilation * stride_;
        stride_ *= l.stride;
    }
    if (receptive_field_ < stride_) fail("backbone receptive field smaller than its stride");
}

BackboneSpec BackboneSpec::reference() {
    return BackboneSpec({
        {16, 9, 4, 1, Activation::Relu},
        {32, 5, 2, 2, Activation::Relu},
        {32, 5, 2, 3, Activation::Relu},
        {64, 3, 1, 8, Activation::Relu},
        {32, 1, 1, 1, Activation::Identity},
    });
}

int BackboneSpec::layer_input_channels(std::size_t layer) const {
    return layer == 0 ? input_channels_ : layers_.at(layer - 1).channels;
}

std::string BackboneSpec::describe() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (i) os << ',';
        os << l.channels << ':' << l.kernel << ':' << l.stride << ':' << l.dilation << ':' << to_string(l.activation);
    }
    return os.str();
}

BackboneSpec BackboneSpec::parse(const std::string& text) {
    std::vector<ConvLayerSpec> layers;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream is(item);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(is, field, ':')) fields.push_back(field);
        if (fields.size() != 5) fail("bad backbone layer '" + item + "' (want channels:kernel:stride:dilation:act)");
        try {
            layers.push_back({std::stoi(fields[0]), std::stoi(fields[1]), std::stoi(fields[2]), std::stoi(fields[3]),
                              activation_from_string(fields[4])});
        } catch (const std::logic_error&) {
            fail("bad backbone layer '" + item + "'");
        }
    }
    return BackboneSpec(std::move(layers));
}

BackboneParams zero_backbone_params(const BackboneSpec& spec) {
    BackboneParams params;
    for (std::size_t i = 0; i < spec.layers().size(); ++i) {
        const auto& l = spec.layers()[i];
        ConvParams p;
        p.in_channels = spec.layer_input_channels(i);
        p.out_channels = l.channels;
        p.kernel = l.kernel;
        p.weight.assign(static_cast<std::size_t>(p.kernel) * p.in_channels * p.out_channels, 0.0);
        p.bias.assign(static_cast<std::size_t>(p.out_channels), 0.0);
        params.push_back(std::move(p));
    }
    return params;
}

BackboneParams init_backbone_params(const BackboneSpec& spec, std::uint64_t seed) {
    auto params = zero_backbone_params(spec);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const double fan_in = static_cast<double>(p.kernel * p.in_channels);
        const double gain = spec.layers()[i].activation == Activation::Relu ? 2.0 : 1.0;
        std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
        for (auto& w : p.weight) w = static_cast<float>(dist(rng));
    }
    return params;
}

namespace {

// Computes one output frame from input frames base[0], base[d], ... Both the
// batch and streaming paths go through here so results match bit for bit.
void conv_frame(const ConvLayerSpec& layer, const ConvParams& p, const double* base, double* out) {
    const int cin = p.in_channels;
    const int cout = p.out_channels;
    std::copy(p.bias.begin(), p.bias.end(), out);
    for (int k = 0; k < p.kernel; ++k) {
        const double* x = base + static_cast<std::size_t>(k) * layer.dilation * cin;
        const double* wk = p.weight.data() + static_cast<std::size_t>(k) * cin * cout;
        for (int i = 0; i < cin; ++i) {
            const double xi = x[i];
            const double* w = wk + static_cast<std::size_t>(i) * cout;
            for (int o = 0; o < cout; ++o) out[o] += w[o] * xi;
        }
    }
    if (layer.activation == Activation::Relu) {
        for (int o = 0; o < cout; ++o) out[o] = out[o] > 0.0 ? out[o] : 0.0;
    }
}

Matrix conv_forward(const ConvLayerSpec& layer, const ConvParams& p, const Matrix& in) {
    const std::int64_t frames = static_cast<std::int64_t>(in.rows);
    if (frames < layer.span()) fail("utterance shorter than receptive field");
    const std::size_t n = static_cast<std::size_t>((frames - layer.span()) / layer.stride + 1);
    Matrix out(n, static_cast<std::size_t>(p.out_channels));
    for (std::size_t j = 0; j < n; ++j) {
        conv_frame(layer, p, in.data.data() + j * layer.stride * in.cols, out.data.data() + j * out.cols);
    }
    return out;
}

} // namespace

Matrix backbone_forward(const BackboneSpec& spec, const BackboneParams& params, std::span<const double> signal,
                        BackboneTrace* trace) {
    if (params.size() != spec.layers().size()) fail("backbone parameter count mismatch");
    if (static_cast<std::int64_t>(signal.size()) < spec.receptive_field()) {
        fail("utterance shorter than receptive field");
    }
    Matrix x(signal.size(), 1);
    std::copy(signal.begin(), signal.end(), x.data.begin());
    if (trace) {
        trace->activations.clear();
        trace->activations.push_back(x);
    }
    for (std::size_t i = 0; i < spec.layers().size(); ++i) {
        x = conv_forward(spec.layers()[i], params[i], x);
        if (trace) trace->activations.push_back(x);
    }
    return x;
}

void backbone_backward(const BackboneSpec& spec, const BackboneParams& params, const BackboneTrace& trace,
                       const Matrix& grad_features, BackboneParams& grads) {
    const std::size_t L = spec.layers().size();
    if (trace.activations.size() != L + 1) fail("backbone trace does not match spec");
    Matrix g = grad_features;
    for (std::size_t li = L; li-- > 0;) {
        const auto& layer = spec.layers()[li];
        const auto& p = params[li];
        auto& gp = grads[li];
        const Matrix& in = trace.activations[li];
        const Matrix& out = trace.activations[li + 1];
        const int cin = p.in_channels;
        const int cout = p.out_channels;

        if (layer.activation == Activation::Relu) {
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                if (out.data[i] <= 0.0) g.data[i] = 0.0;
            }
        }
        const bool need_input_grad = li > 0;
        Matrix g_in = need_input_grad ? Matrix(in.rows, in.cols) : Matrix();
        for (std::size_t j = 0; j < out.rows; ++j) {
            const double* go = g.data.data() + j * cout;
            for (int o = 0; o < cout; ++o) gp.bias[o] += go[o];
            for (int k = 0; k < p.kernel; ++k) {
                const std::size_t frame = j * layer.stride + static_cast<std::size_t>(k) * layer.dilation;
                const double* x = in.data.data() + frame * cin;
                double* gx = need_input_grad ? g_in.data.data() + frame * cin : nullptr;
                for (int i = 0; i < cin; ++i) {
                    const std::size_t off = (static_cast<std::size_t>(k) * cin + i) * cout;
                    double* gw = gp.weight.data() + off;
                    const double* w = p.weight.data() + off;
                    const double xi = x[i];
                    double acc = 0.0;
                    for (int o = 0; o < cout; ++o) {
                        gw[o] += go[o] * xi;
                        acc += w[o] * go[o];
                    }
                    if (gx) gx[i] += acc;
                }
            }
        }
        if (need_input_grad) g = std::move(g_in);
    }
}

StreamingBackbone::StreamingBackbone(const BackboneSpec& spec, const BackboneParams& params)
    : spec_(&spec), params_(&params), state_(spec.layers().size()) {
    if (params.size() != spec.layers().size()) fail("backbone parameter count mismatch");
}

Matrix StreamingBackbone::push(std::span<const double> samples) {
    samples_seen_ += static_cast<std::int64_t>(samples.size());
    state_[0].frames.insert(state_[0].frames.end(), samples.begin(), samples.end());

    const std::size_t L = spec_->layers().size();
    std::vector<double> produced;
    for (std::size_t li = 0; li < L; ++li) {
        const auto& layer = spec_->layers()[li];
        const auto& p = (*params_)[li];
        auto& st = state_[li];
        const std::size_t cin = static_cast<std::size_t>(p.in_channels);
        const std::int64_t available = st.first_frame + static_cast<std::int64_t>(st.frames.size() / cin);
        std::vector<double> out;
        std::vector<double> frame(static_cast<std::size_t>(p.out_channels));
        while (st.next_output * layer.stride + layer.span() <= available) {
            const std::int64_t start = st.next_output * layer.stride - st.first_frame;
            conv_frame(layer, p, st.frames.data() + static_cast<std::size_t>(start) * cin, frame.data());
            out.insert(out.end(), frame.begin(), frame.end());
            ++st.next_output;
        }
        // Frames before the next output's window are no longer needed.
        const std::int64_t keep_from = std::min(st.next_output * layer.stride, available);
        if (keep_from > st.first_frame) {
            const auto drop = static_cast<std::size_t>(keep_from - st.first_frame) * cin;
            st.frames.erase(st.frames.begin(), st.frames.begin() + static_cast<std::ptrdiff_t>(drop));
            st.first_frame = keep_from;
        }
        if (li + 1 < L) {
            auto& next = state_[li + 1].frames;
            next.insert(next.end(), out.begin(), out.end());
        } else {
            produced = std::move(out);
        }
    }
    const std::size_t d = spec_->feature_dim();
    Matrix rows(produced.size() / d, d);
    rows.data = std::move(produced);
    rows_emitted_ += static_cast<std::int64_t>(rows.rows);
    return rows;
}

} // namespace wordloc
