#pragma once

#include <span>
#include <vector>

#include "wordloc/corpus.hpp"
#include "wordloc/inference.hpp"
#include "wordloc/metrics.hpp"

namespace wordloc {

// Head outputs of every utterance, computed once so several decoding
// settings can be scored without rerunning the network.
struct CachedOutputs {
    FrameGeometry geometry{1, 1};
    std::vector<HeadOutputs> outputs;
};

CachedOutputs run_heads(const Model& model, std::span<const Utterance> utterances);

std::vector<Proposal> decode_cached(const CachedOutputs& cache, std::size_t index, const DecodeOptions& options);

DetectionCounts score_detections(const CachedOutputs& cache, std::span<const Utterance> utterances,
                                 const DecodeOptions& options, double accuracy_iou = 0.5);

struct LambdaChoice {
    double lambda = 0.0;
    DetectionScores scores;
};

// Default grid: 0.05, 0.10, ..., 0.95, 0.97, 0.99.
std::vector<double> default_lambda_grid();

// Picks the λ with the highest F1; ties go to the larger λ.
LambdaChoice tune_lambda(const CachedOutputs& cache, std::span<const Utterance> utterances, DecodeOptions options,
                         std::span<const double> grid);

} // namespace wordloc
