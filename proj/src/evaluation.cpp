#include "wordloc/evaluation.hpp"

#include "wordloc/error.hpp"

namespace wordloc {

CachedOutputs run_heads(const Model& model, std::span<const Utterance> utterances) {
    CachedOutputs cache;
    cache.geometry = model.geometry();
    cache.outputs.reserve(utterances.size());
    for (const auto& u : utterances) cache.outputs.push_back(model_forward(model.spec, model.params, u.samples));
    return cache;
}

std::vector<Proposal> decode_cached(const CachedOutputs& cache, std::size_t index, const DecodeOptions& options) {
    return nms(propose_events(cache.outputs.at(index), cache.geometry, options), options.nms_iou);
}

DetectionCounts score_detections(const CachedOutputs& cache, std::span<const Utterance> utterances,
                                 const DecodeOptions& options, double accuracy_iou) {
    if (cache.outputs.size() != utterances.size()) fail("cached outputs do not match the utterance list");
    DetectionCounts counts;
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        const auto found = decode_cached(cache, i, options);
        counts.add(match_events(utterances[i].events, found), accuracy_iou);
    }
    return counts;
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
    grid.push_back(0.97);
    grid.push_back(0.99);
    return grid;
}

LambdaChoice tune_lambda(const CachedOutputs& cache, std::span<const Utterance> utterances, DecodeOptions options,
                         std::span<const double> grid) {
    if (grid.empty()) usage_error("empty lambda grid");
    LambdaChoice best;
    bool first = true;
    for (double lambda : grid) {
        options.lambda = lambda;
        validate(options);
        const auto scores = detection_scores(score_detections(cache, utterances, options));
        if (first || scores.f1 >= best.scores.f1) {
            best = {lambda, scores};
            first = false;
        }
    }
    return best;
}

} // namespace wordloc
