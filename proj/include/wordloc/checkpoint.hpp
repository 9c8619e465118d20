#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wordloc/model.hpp"

namespace wordloc {

inline constexpr int kCheckpointVersion = 1;

// Optimizer and schedule state needed to resume training exactly.
struct TrainingState {
    int epochs_completed = 0;
    double learning_rate = 0.0; // rate used by the last completed epoch
    std::uint64_t adam_step = 0;
    std::vector<double> adam_m; // flat, parameter block order
    std::vector<double> adam_v;
    // Resolved training configuration (flat key/value), used to check that a
    // resumed run continues the same schedule.
    std::map<std::string, std::string> config;
};

struct Checkpoint {
    Model model;
    std::optional<TrainingState> training;
};

// Layout: a "wordloc-checkpoint <version>" line, one line of JSON describing
// spec, lexicon, geometry, metadata and the block table, then every block as
// little-endian float32 in table order. Values must be float-representable
// for an exact roundtrip; the trainer keeps them that way.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const TrainingState* state = nullptr);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Model& model, const TrainingState* state = nullptr);
Checkpoint load_checkpoint(const std::string& path);

} // namespace wordloc
