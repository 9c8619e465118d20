#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wordloc/geometry.hpp"

namespace wordloc {

// Ordered set of c unique words. Class index c is the "no lexicon word" class.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::vector<std::string> words);

    int size() const noexcept { return static_cast<int>(words_.size()); }
    int negative_class() const noexcept { return size(); }
    const std::string& word(int index) const { return words_.at(static_cast<std::size_t>(index)); }
    const std::vector<std::string>& words() const noexcept { return words_; }
    std::optional<int> index_of(const std::string& word) const;

    friend bool operator==(const Lexicon& a, const Lexicon& b) { return a.words_ == b.words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

struct Event {
    int word;
    Interval span;
};

enum class Label : std::uint8_t { Negative = 0, Positive = 1, DontCare = 2 };

struct LabelThresholds {
    double positive = 0.95; // iog strictly above -> positive
    double negative = 0.5;  // iog strictly below -> negative
};

// Fraction of the event covered by segment t.
double iog(const FrameGeometry& geometry, std::int64_t t, const Event& event);

Label detection_label(double iog_value, const LabelThresholds& thresholds = {});

struct OffsetLength {
    double offset; // stride units, event center minus window center
    double length; // fraction of R
};

OffsetLength encode_offset_length(const FrameGeometry& geometry, std::int64_t t, const Interval& span);

struct DecodedSpan {
    double begin;
    double end;
};

// Inverse of encode_offset_length: b = S(c_t + o) - lR/2, e = b + lR.
DecodedSpan decode_offset_length(const FrameGeometry& geometry, std::int64_t t, double offset, double length);

// Per-utterance training targets. o and l are meaningful only where y is
// Positive; elsewhere they hold 0.
struct TargetTensors {
    std::size_t segments = 0;
    int classes = 0;
    std::vector<Label> y;
    std::vector<double> o;
    std::vector<double> l;
    std::vector<int> s;

    Label label(std::size_t t, int w) const { return y[t * classes + w]; }
    double offset(std::size_t t, int w) const { return o[t * classes + w]; }
    double length(std::size_t t, int w) const { return l[t * classes + w]; }
    std::size_t positives() const;
    std::size_t negatives() const;
};

TargetTensors build_targets(const FrameGeometry& geometry, int classes, std::span<const Event> events,
                            std::int64_t num_samples, const LabelThresholds& thresholds = {});

} // namespace wordloc
