#include "wordloc/geometry.hpp"

#include <algorithm>
#include <string>

#include "wordloc/error.hpp"

namespace wordloc {

Interval::Interval(std::int64_t begin, std::int64_t end) : begin_(begin), end_(end) {
    if (begin >= end) {
        fail("invalid interval [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
    }
}

FrameGeometry::FrameGeometry(std::int64_t receptive_field, std::int64_t stride)
    : receptive_field_(receptive_field), stride_(stride) {
    if (stride < 1 || receptive_field < stride) {
        fail("frame geometry requires R >= S >= 1 (got R=" + std::to_string(receptive_field) +
             ", S=" + std::to_string(stride) + ")");
    }
}

std::int64_t FrameGeometry::segment_count(std::int64_t num_samples) const {
    if (num_samples < receptive_field_) fail("utterance shorter than receptive field");
    return (num_samples - receptive_field_) / stride_ + 1;
}

Interval FrameGeometry::segment_interval(std::int64_t t) const {
    if (t < 0) fail("negative segment index");
    return Interval(t * stride_, t * stride_ + receptive_field_);
}

double FrameGeometry::segment_center(std::int64_t t) const {
    return static_cast<double>(2 * t * stride_ + receptive_field_) / static_cast<double>(2 * stride_);
}

std::int64_t overlap(const Interval& a, const Interval& b) noexcept {
    return std::max<std::int64_t>(0, std::min(a.end(), b.end()) - std::max(a.begin(), b.begin()));
}

double interval_iou(double a_begin, double a_end, double b_begin, double b_end) noexcept {
    const double inter = std::max(0.0, std::min(a_end, b_end) - std::max(a_begin, b_begin));
    const double uni = (a_end - a_begin) + (b_end - b_begin) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

} // namespace wordloc
