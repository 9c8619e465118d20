#include "wordloc/labeling.hpp"

#include <algorithm>
#include <cmath>

#include "wordloc/error.hpp"

namespace wordloc {

Lexicon::Lexicon(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.empty()) fail("lexicon must contain at least one word");
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (words_[i].empty()) fail("lexicon word must not be empty");
        if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
            fail("duplicate lexicon word '" + words_[i] + "'");
        }
    }
}

std::optional<int> Lexicon::index_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

double iog(const FrameGeometry& geometry, std::int64_t t, const Event& event) {
    const auto window = geometry.segment_interval(t);
    return static_cast<double>(overlap(window, event.span)) / static_cast<double>(event.span.length());
}

Label detection_label(double iog_value, const LabelThresholds& thresholds) {
    if (iog_value > thresholds.positive) return Label::Positive;
    if (iog_value < thresholds.negative) return Label::Negative;
    return Label::DontCare;
}

OffsetLength encode_offset_length(const FrameGeometry& geometry, std::int64_t t, const Interval& span) {
    const double S = static_cast<double>(geometry.stride());
    const double R = static_cast<double>(geometry.receptive_field());
    const double center = static_cast<double>(span.begin() + span.end()) / (2.0 * S);
    return {center - geometry.segment_center(t), static_cast<double>(span.length()) / R};
}

DecodedSpan decode_offset_length(const FrameGeometry& geometry, std::int64_t t, double offset, double length) {
    const double S = static_cast<double>(geometry.stride());
    const double R = static_cast<double>(geometry.receptive_field());
    const double begin = S * (geometry.segment_center(t) + offset) - 0.5 * length * R;
    return {begin, begin + length * R};
}

std::size_t TargetTensors::positives() const {
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), Label::Positive));
}

std::size_t TargetTensors::negatives() const {
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), Label::Negative));
}

TargetTensors build_targets(const FrameGeometry& geometry, int classes, std::span<const Event> events,
                            std::int64_t num_samples, const LabelThresholds& thresholds) {
    if (classes < 1) fail("lexicon size must be positive");
    const std::int64_t n = geometry.segment_count(num_samples);
    const std::size_t cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(classes);

    TargetTensors out;
    out.segments = static_cast<std::size_t>(n);
    out.classes = classes;
    out.y.assign(cells, Label::Negative);
    out.o.assign(cells, 0.0);
    out.l.assign(cells, 0.0);
    out.s.assign(out.segments, classes);

    for (const auto& ev : events) {
        if (ev.word < 0 || ev.word >= classes) {
            fail("event word index " + std::to_string(ev.word) + " outside lexicon of size " +
                 std::to_string(classes));
        }
        if (ev.span.begin() < 0 || ev.span.end() > num_samples) fail("event outside utterance bounds");
    }

    // Per cell: best iog so far and the event that produced it. Only segments
    // that intersect an event can have a non-zero iog; the rest stay negative.
    std::vector<double> best(cells, 0.0);
    std::vector<int> owner(cells, -1);
    const std::int64_t S = geometry.stride();
    const std::int64_t R = geometry.receptive_field();
    for (std::size_t e = 0; e < events.size(); ++e) {
        const auto& ev = events[e];
        // t*S < end and t*S + R > begin
        const std::int64_t t_lo = std::max<std::int64_t>(0, (ev.span.begin() - R) / S);
        const std::int64_t t_hi = std::min<std::int64_t>(n - 1, (ev.span.end() - 1) / S);
        for (std::int64_t t = t_lo; t <= t_hi; ++t) {
            const double value = iog(geometry, t, ev);
            const std::size_t cell = static_cast<std::size_t>(t) * classes + ev.word;
            const int prev = owner[cell];
            const bool better = prev < 0 || value > best[cell] ||
                                (value == best[cell] && ev.span.begin() < events[prev].span.begin());
            if (value > 0.0 && better) {
                best[cell] = value;
                owner[cell] = static_cast<int>(e);
            }
        }
    }

    for (std::size_t t = 0; t < out.segments; ++t) {
        int chosen = -1;
        double chosen_abs = 0.0;
        for (int w = 0; w < classes; ++w) {
            const std::size_t cell = t * classes + w;
            if (owner[cell] < 0) continue;
            const Label label = detection_label(best[cell], thresholds);
            out.y[cell] = label;
            if (label != Label::Positive) continue;
            const auto& ev = events[owner[cell]];
            const auto ol = encode_offset_length(geometry, static_cast<std::int64_t>(t), ev.span);
            out.o[cell] = ol.offset;
            out.l[cell] = ol.length;
            const double a = std::abs(ol.offset);
            if (chosen < 0 || a < chosen_abs ||
                (a == chosen_abs && ev.span.begin() < events[owner[t * classes + chosen]].span.begin())) {
                chosen = w;
                chosen_abs = a;
            }
        }
        if (chosen >= 0) out.s[t] = chosen;
    }
    return out;
}

} // namespace wordloc
