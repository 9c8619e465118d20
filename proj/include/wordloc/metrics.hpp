#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wordloc/inference.hpp"
#include "wordloc/labeling.hpp"

namespace wordloc {

struct MatchPair {
    std::size_t truth;
    std::size_t proposal;
    double iou;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> unmatched_truth;     // false negatives
    std::vector<std::size_t> unmatched_proposals; // false positives
};

// Greedy one-to-one matching. Proposals, strongest first, claim the unclaimed
// same-word truth of largest IoU among those they overlap.
MatchResult match_events(std::span<const Event> truth, std::span<const Proposal> proposals);

// Pooled (micro-averaged) counts over a corpus.
struct DetectionCounts {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t accurate = 0; // matched with IoU >= accuracy threshold
    double iou_sum = 0.0;

    void add(const MatchResult& m, double accuracy_iou = 0.5);
    std::size_t truths() const noexcept { return true_positives + false_negatives; }
    std::size_t proposals() const noexcept { return true_positives + false_positives; }
};

struct DetectionScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double actual_accuracy = 0.0;
    double avg_iou = 0.0;
    // Names of scores whose denominator was empty (reported as 0).
    std::vector<std::string> undefined;
};

DetectionScores detection_scores(const DetectionCounts& counts);

struct KwsOperatingPoint {
    int keyword = 0;
    double lambda = 0.0;
    double p_miss = 0.0;
    double p_fa = 0.0; // false alarms per second of audio
};

inline constexpr double kTwvBeta = 999.9;

// 1 - (1/K) sum_k [P_miss(k) + beta P_FA(k)].
double twv(std::span<const KwsOperatingPoint> points, double beta = kTwvBeta);

struct ScoredUtterance {
    std::vector<Event> truth;
    std::vector<Proposal> proposals;
};

struct KeywordOptimum {
    int keyword = 0;
    // +infinity means rejecting every detection is optimal.
    double lambda = std::numeric_limits<double>::infinity();
    double p_miss = 1.0;
    double p_fa = 0.0;
    std::size_t occurrences = 0;
    std::size_t hits = 0;
    std::size_t false_alarms = 0;
};

struct MtwvResult {
    std::vector<KeywordOptimum> keywords; // keywords with at least one occurrence
    std::vector<int> excluded;            // keywords without occurrences
    double mtwv = 0.0;
};

// Per-keyword threshold sweep over the distinct proposal scores (plus
// "reject all"). Ties in cost keep the higher threshold.
MtwvResult mtwv_sweep(std::span<const ScoredUtterance> corpus, std::span<const int> keywords,
                      double audio_seconds, double beta = kTwvBeta);

// TWV with one threshold shared by all keywords.
double twv_at(std::span<const ScoredUtterance> corpus, std::span<const int> keywords, double audio_seconds,
              double lambda, double beta = kTwvBeta);

} // namespace wordloc
