#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wordloc/checkpoint.hpp"
#include "wordloc/corpus.hpp"
#include "wordloc/model.hpp"

namespace wordloc {

enum class LrSchedule { Cosine, Constant };

struct TrainConfig {
    int epochs = 30;
    int batch_size = 4;
    double lr = 1e-3;
    double lr_final = 1e-4;
    LrSchedule schedule = LrSchedule::Cosine;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 1;
    int threads = 1;
    // Leading cut drawn uniformly from [0, max_leading_cut); -1 means the
    // backbone stride, 0 disables the augmentation.
    int max_leading_cut = -1;
    bool teacher_forcing = false;
    LabelThresholds thresholds;

    // Flat key/value view stored in checkpoints.
    std::map<std::string, std::string> describe() const;
};

// Cosine annealing from lr at epoch 0 to lr_final at epoch == epochs (the end
// of training); constant returns lr.
double learning_rate(const TrainConfig& config, int epoch);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    LossBreakdown loss; // mean over the epoch's minibatches
};

std::string training_log_header();
std::string training_log_row(const EpochLog& row);

struct TrainResult {
    Model model;
    TrainingState state;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const Model&, const TrainingState&)>;

// Minibatch Adam on the five-term loss. Parameters and optimizer moments are
// rounded to float32 after every step so checkpoints are lossless and a
// resumed run matches an uninterrupted one bit for bit.
TrainResult train(std::span<const Utterance> data, Model model, const TrainConfig& config,
                  const std::optional<TrainingState>& resume = std::nullopt, const EpochCallback& on_epoch = {});

// Drops the first `cut` samples and shifts the events; events cut entirely
// are dropped, partially cut ones are trimmed.
Utterance leading_cut(const Utterance& utt, std::int64_t cut);

} // namespace wordloc
