#pragma once

#include <cstdint>

namespace wordloc {

// Half-open sample interval [begin, end). Empty or inverted intervals are
// rejected at construction.
class Interval {
public:
    Interval(std::int64_t begin, std::int64_t end);

    std::int64_t begin() const noexcept { return begin_; }
    std::int64_t end() const noexcept { return end_; }
    std::int64_t length() const noexcept { return end_ - begin_; }

    friend bool operator==(const Interval&, const Interval&) = default;

private:
    std::int64_t begin_;
    std::int64_t end_;
};

// Window layout of a backbone: segment t covers samples [t*S, t*S + R).
class FrameGeometry {
public:
    FrameGeometry(std::int64_t receptive_field, std::int64_t stride);

    std::int64_t receptive_field() const noexcept { return receptive_field_; }
    std::int64_t stride() const noexcept { return stride_; }

    // floor((T - R) / S) + 1; throws when T < R.
    std::int64_t segment_count(std::int64_t num_samples) const;
    Interval segment_interval(std::int64_t t) const;
    // Window center in stride units, (2tS + R) / (2S).
    double segment_center(std::int64_t t) const;

    friend bool operator==(const FrameGeometry&, const FrameGeometry&) = default;

private:
    std::int64_t receptive_field_;
    std::int64_t stride_;
};

std::int64_t overlap(const Interval& a, const Interval& b) noexcept;

// Temporal IoU of two real-valued intervals; 0 when either is empty.
double interval_iou(double a_begin, double a_end, double b_begin, double b_end) noexcept;

} // namespace wordloc
