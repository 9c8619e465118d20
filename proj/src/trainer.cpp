#include "wordloc/trainer.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), stream};
    return std::mt19937_64(seq);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void check_finite(const LossBreakdown& l, int epoch) {
    const std::pair<const char*, double> terms[] = {
        {"L_pos", l.pos}, {"L_neg", l.neg}, {"L_o", l.offset}, {"L_l", l.length}, {"L_s", l.classifier}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) {
            fail("training diverged in epoch " + std::to_string(epoch) + ": " + name + " is " + fmt(v));
        }
    }
}

} // namespace

std::map<std::string, std::string> TrainConfig::describe() const {
    return {{"epochs", std::to_string(epochs)},
            {"batch_size", std::to_string(batch_size)},
            {"lr", fmt(lr)},
            {"lr_final", fmt(lr_final)},
            {"lr_schedule", schedule == LrSchedule::Cosine ? "cosine" : "constant"},
            {"adam_beta1", fmt(beta1)},
            {"adam_beta2", fmt(beta2)},
            {"adam_epsilon", fmt(adam_epsilon)},
            {"seed", std::to_string(seed)},
            {"max_leading_cut", std::to_string(max_leading_cut)},
            {"teacher_forcing", teacher_forcing ? "true" : "false"},
            {"label_positive", fmt(thresholds.positive)},
            {"label_negative", fmt(thresholds.negative)}};
}

double learning_rate(const TrainConfig& config, int epoch) {
    if (config.schedule == LrSchedule::Constant || config.epochs <= 0) return config.lr;
    const double progress = static_cast<double>(epoch) / static_cast<double>(config.epochs);
    return config.lr_final + 0.5 * (config.lr - config.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string training_log_header() { return "epoch,lr,L_pos,L_neg,L_o,L_l,L_s,total"; }

std::string training_log_row(const EpochLog& r) {
    std::ostringstream os;
    os.precision(9);
    os << r.epoch << ',' << r.lr << ',' << r.loss.pos << ',' << r.loss.neg << ',' << r.loss.offset << ','
       << r.loss.length << ',' << r.loss.classifier << ',' << r.loss.total();
    return os.str();
}

Utterance leading_cut(const Utterance& utt, std::int64_t cut) {
    if (cut <= 0) return utt;
    Utterance out;
    out.id = utt.id;
    const auto n = static_cast<std::int64_t>(utt.samples.size());
    if (cut >= n) fail("leading cut removes the whole utterance");
    out.samples.assign(utt.samples.begin() + cut, utt.samples.end());
    for (const auto& e : utt.events) {
        if (e.span.end() - cut <= 0) continue;
        out.events.push_back(Event{e.word, Interval(std::max<std::int64_t>(0, e.span.begin() - cut), e.span.end() - cut)});
    }
    return out;
}

TrainResult train(std::span<const Utterance> data, Model model, const TrainConfig& config,
                  const std::optional<TrainingState>& resume, const EpochCallback& on_epoch) {
    if (data.empty()) fail("training corpus is empty");
    if (config.epochs < 1) usage_error("epochs must be positive");
    if (config.batch_size < 1) usage_error("batch size must be positive");
    if (!(config.lr > 0.0) || !(config.lr_final > 0.0)) usage_error("learning rates must be positive");
    const auto geometry = model.geometry();
    const std::int64_t max_cut = config.max_leading_cut < 0 ? geometry.stride() : config.max_leading_cut;

    for (const auto& u : data) {
        if (static_cast<std::int64_t>(u.samples.size()) < geometry.receptive_field() + max_cut) {
            fail("utterance " + u.id + " is shorter than the receptive field plus the leading cut");
        }
    }

    const std::size_t total = parameter_count(model.params);
    TrainResult result;
    TrainingState state;
    state.config = config.describe();
    state.adam_m.assign(total, 0.0);
    state.adam_v.assign(total, 0.0);
    if (resume) {
        if (resume->adam_m.size() != total) fail("resume state does not match the model");
        auto saved = resume->config;
        auto now = state.config;
        saved.erase("epochs");
        now.erase("epochs");
        if (saved != now) fail("resume configuration differs from the checkpoint's training configuration");
        state.epochs_completed = resume->epochs_completed;
        state.learning_rate = resume->learning_rate;
        state.adam_step = resume->adam_step;
        state.adam_m = resume->adam_m;
        state.adam_v = resume->adam_v;
    }

    // Keep parameters float32-representable from the start.
    for_each_block(model.params, [](const std::string&, std::span<double> b) {
        for (auto& v : b) v = static_cast<float>(v);
    });

    const int workers = std::max(1, std::min(config.threads, config.batch_size));
    const std::size_t nbatch = (data.size() + config.batch_size - 1) / config.batch_size;

    for (int epoch = state.epochs_completed; epoch < config.epochs; ++epoch) {
        const double lr = learning_rate(config, epoch);
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto shuffle_rng = epoch_rng(config.seed, epoch, 11);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::vector<std::int64_t> cuts(data.size(), 0);
        if (max_cut > 0) {
            auto cut_rng = epoch_rng(config.seed, epoch, 12);
            std::uniform_int_distribution<std::int64_t> cut_dist(0, max_cut - 1);
            for (auto& c : cuts) c = cut_dist(cut_rng);
        }

        LossBreakdown epoch_loss;
        for (std::size_t b = 0; b < nbatch; ++b) {
            const std::size_t lo = b * config.batch_size;
            const std::size_t hi = std::min(data.size(), lo + config.batch_size);
            const std::size_t count = hi - lo;
            std::vector<Utterance> batch;
            std::vector<TargetTensors> targets;
            LossNormalizers norms;
            for (std::size_t i = lo; i < hi; ++i) {
                batch.push_back(leading_cut(data[order[i]], cuts[order[i]]));
                const auto& u = batch.back();
                targets.push_back(build_targets(geometry, model.lexicon.size(), u.events,
                                                static_cast<std::int64_t>(u.samples.size()), config.thresholds));
                norms += LossNormalizers::of(targets.back());
            }

            std::vector<Parameters> grads(count, zeros_like(model.params));
            std::vector<LossBreakdown> losses(count);
            LossOptions options;
            options.teacher_forcing = config.teacher_forcing;
            auto work = [&](int w) {
                for (std::size_t i = static_cast<std::size_t>(w); i < count; i += static_cast<std::size_t>(workers)) {
                    losses[i] = loss_and_gradient(model.spec, model.params, batch[i].samples, targets[i], norms,
                                                  options, grads[i]);
                }
            };
            if (workers == 1) {
                work(0);
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
                for (auto& t : pool) t.join();
            }

            // Fixed-order reduction keeps results independent of thread count.
            LossBreakdown batch_loss;
            for (std::size_t i = 0; i < count; ++i) batch_loss += losses[i];
            check_finite(batch_loss, epoch);
            for (std::size_t i = 1; i < count; ++i) {
                std::vector<std::span<double>> dst;
                for_each_block(grads[0], [&](const std::string&, std::span<double> s) { dst.push_back(s); });
                std::size_t k = 0;
                for_each_block(grads[i], [&](const std::string&, std::span<double> s) {
                    auto d = dst[k++];
                    for (std::size_t j = 0; j < s.size(); ++j) d[j] += s[j];
                });
            }

            ++state.adam_step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.adam_step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.adam_step));
            std::vector<std::span<double>> gblocks;
            for_each_block(grads[0], [&](const std::string&, std::span<double> s) { gblocks.push_back(s); });
            std::size_t flat = 0, k = 0;
            for_each_block(model.params, [&](const std::string&, std::span<double> p) {
                const auto g = gblocks[k++];
                for (std::size_t j = 0; j < p.size(); ++j, ++flat) {
                    double& m = state.adam_m[flat];
                    double& v = state.adam_v[flat];
                    m = static_cast<float>(config.beta1 * m + (1.0 - config.beta1) * g[j]);
                    v = static_cast<float>(config.beta2 * v + (1.0 - config.beta2) * g[j] * g[j]);
                    const double step = lr * (m / bc1) / (std::sqrt(v / bc2) + config.adam_epsilon);
                    p[j] = static_cast<float>(p[j] - step);
                }
            });
            epoch_loss += batch_loss;
        }

        const double inv = 1.0 / static_cast<double>(nbatch);
        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        row.loss = {epoch_loss.pos * inv, epoch_loss.neg * inv, epoch_loss.offset * inv, epoch_loss.length * inv,
                    epoch_loss.classifier * inv};
        state.epochs_completed = epoch + 1;
        state.learning_rate = lr;
        result.log.push_back(row);
        if (on_epoch) on_epoch(row, model, state);
    }
    result.model = std::move(model);
    result.state = std::move(state);
    return result;
}

} // namespace wordloc
