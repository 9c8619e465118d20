#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wordloc/error.hpp"
#include "wordloc/labeling.hpp"

using namespace wordloc;

namespace {

const FrameGeometry kPaper(13200, 160);

// Sample-counting iog, independent of the interval arithmetic.
double iog_by_counting(const FrameGeometry& g, std::int64_t t, const Event& e) {
    const auto seg = g.segment_interval(t);
    std::int64_t inside = 0;
    for (auto s = e.span.begin(); s < e.span.end(); ++s) inside += (s >= seg.begin() && s < seg.end());
    return static_cast<double>(inside) / static_cast<double>(e.span.length());
}

// Straight loop over (t, w, event) following the labeling rules.
TargetTensors oracle_targets(const FrameGeometry& g, int classes, const std::vector<Event>& events,
                             std::int64_t T) {
    TargetTensors out;
    const auto n = (T - g.receptive_field()) / g.stride() + 1;
    out.segments = static_cast<std::size_t>(n);
    out.classes = classes;
    for (std::int64_t t = 0; t < n; ++t) {
        int best_word = classes;
        double best_abs = 0.0;
        std::int64_t best_begin = 0;
        for (int w = 0; w < classes; ++w) {
            int owner = -1;
            double best = 0.0;
            for (std::size_t i = 0; i < events.size(); ++i) {
                if (events[i].word != w) continue;
                const double v = iog_by_counting(g, t, events[i]);
                if (v <= 0.0) continue;
                if (owner < 0 || v > best || (v == best && events[i].span.begin() < events[owner].span.begin())) {
                    owner = static_cast<int>(i);
                    best = v;
                }
            }
            Label y = Label::Negative;
            double o = 0.0, l = 0.0;
            if (owner >= 0) {
                y = best > 0.95 ? Label::Positive : (best < 0.5 ? Label::Negative : Label::DontCare);
            }
            if (y == Label::Positive) {
                const auto& e = events[owner];
                const double center = (2.0 * t * g.stride() + g.receptive_field()) / (2.0 * g.stride());
                o = (e.span.begin() + e.span.end()) / (2.0 * g.stride()) - center;
                l = static_cast<double>(e.span.length()) / g.receptive_field();
                const double a = std::abs(o);
                if (best_word == classes || a < best_abs || (a == best_abs && e.span.begin() < best_begin)) {
                    best_word = w;
                    best_abs = a;
                    best_begin = e.span.begin();
                }
            }
            out.y.push_back(y);
            out.o.push_back(o);
            out.l.push_back(l);
        }
        out.s.push_back(best_word);
    }
    return out;
}

} // namespace

TEST_CASE("lexicon") {
    const Lexicon lex({"yes", "no", "stop"});
    CHECK(lex.size() == 3);
    CHECK(lex.negative_class() == 3);
    CHECK(lex.index_of("no") == 1);
    CHECK_FALSE(lex.index_of("go").has_value());
    CHECK_THROWS_AS(Lexicon({"a", "a"}), Error);
    CHECK_THROWS_AS(Lexicon({"a", ""}), Error);
}

TEST_CASE("iog examples") {
    CHECK(iog(kPaper, 0, {0, Interval(200, 1000)}) == 1.0);
    CHECK(iog(kPaper, 0, {0, Interval(13000, 14000)}) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(iog(kPaper, 0, {0, Interval(12500, 13500)}) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("detection label thresholds") {
    CHECK(detection_label(1.0) == Label::Positive);
    CHECK(detection_label(0.2) == Label::Negative);
    CHECK(detection_label(0.7) == Label::DontCare);
    CHECK(detection_label(0.95) == Label::DontCare);
    CHECK(detection_label(0.5) == Label::DontCare);
    CHECK(detection_label(0.8, {0.75, 0.25}) == Label::Positive);
}

TEST_CASE("detection label scan") {
    for (int i = 0; i <= 100; ++i) {
        const double v = i / 100.0;
        const Label expected = v > 0.95 ? Label::Positive : (v < 0.5 ? Label::Negative : Label::DontCare);
        REQUIRE(detection_label(v) == expected);
    }
}

TEST_CASE("encode offset and length") {
    auto a = encode_offset_length(kPaper, 0, Interval(5000, 8200));
    CHECK(a.offset == 0.0);
    CHECK(a.length == doctest::Approx(3200.0 / 13200.0).epsilon(1e-15));
    auto b = encode_offset_length(kPaper, 0, Interval(0, 13200));
    CHECK(b.offset == 0.0);
    CHECK(b.length == 1.0);
    auto c = encode_offset_length(kPaper, 0, Interval(5160, 8360));
    CHECK(c.offset == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.length == doctest::Approx(0.242424).epsilon(1e-6));
}

TEST_CASE("build_targets: no events") {
    const FrameGeometry g(100, 10);
    const auto tt = build_targets(g, 3, {}, 200);
    CHECK(tt.segments == 11);
    CHECK(tt.positives() == 0);
    CHECK(tt.negatives() == 33);
    for (int s : tt.s) CHECK(s == 3);
}

TEST_CASE("build_targets: event inside exactly one segment") {
    const FrameGeometry g(100, 100);
    const std::vector<Event> ev = {{1, Interval(120, 180)}};
    const auto tt = build_targets(g, 2, ev, 300);
    REQUIRE(tt.segments == 3);
    CHECK(tt.label(1, 1) == Label::Positive);
    CHECK(tt.label(0, 1) == Label::Negative);
    CHECK(tt.label(2, 1) == Label::Negative);
    CHECK(tt.offset(1, 1) == doctest::Approx(0.0));
    CHECK(tt.length(1, 1) == doctest::Approx(0.6));
    CHECK(tt.s[1] == 1);
    CHECK(tt.s[0] == 2);
}

TEST_CASE("build_targets: smallest absolute offset wins the classifier label") {
    // S = 10, R = 100, segment 0 center = 5 strides. Word 0 centered at
    // 5.4 strides (|o| = 0.4), word 1 at 3.8 strides (|o| = 1.2).
    const FrameGeometry g(100, 10);
    const std::vector<Event> ev = {{0, Interval(44, 64)}, {1, Interval(28, 48)}};
    const auto tt = build_targets(g, 2, ev, 100);
    REQUIRE(tt.label(0, 0) == Label::Positive);
    REQUIRE(tt.label(0, 1) == Label::Positive);
    CHECK(tt.offset(0, 0) == doctest::Approx(0.4));
    CHECK(tt.offset(0, 1) == doctest::Approx(-1.2));
    CHECK(tt.s[0] == 0);
}

TEST_CASE("build_targets: errors") {
    const FrameGeometry g(100, 10);
    CHECK_THROWS_AS(build_targets(g, 2, std::vector<Event>{{2, Interval(0, 10)}}, 200), Error);
    CHECK_THROWS_AS(build_targets(g, 2, std::vector<Event>{{0, Interval(190, 210)}}, 200), Error);
    CHECK_THROWS_AS(build_targets(g, 2, {}, 99), Error);
}

TEST_CASE("property: build_targets equals brute-force oracle") {
    testing::Gen gen(21);
    for (int iter = 0; iter < 400; ++iter) {
        const auto g = gen.geometry(12, 8);
        const int classes = static_cast<int>(gen.integer(1, 4));
        const auto n = gen.integer(1, 50);
        const auto T = g.receptive_field() + (n - 1) * g.stride() + gen.integer(0, g.stride() - 1);
        auto events = gen.events(classes, T, static_cast<int>(gen.integer(0, 5)), g.receptive_field() + 5);
        if (gen.coin(0.2) && !events.empty()) events.push_back(events.front()); // duplicate
        const auto got = build_targets(g, classes, events, T);
        const auto want = oracle_targets(g, classes, events, T);
        REQUIRE(got.segments == want.segments);
        REQUIRE(got.y == want.y);
        REQUIRE(got.s == want.s);
        for (std::size_t i = 0; i < got.y.size(); ++i) {
            if (got.y[i] != Label::Positive) continue;
            REQUIRE(got.o[i] == doctest::Approx(want.o[i]).epsilon(1e-12));
            REQUIRE(got.l[i] == doctest::Approx(want.l[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: target invariants") {
    testing::Gen gen(22);
    for (int iter = 0; iter < 300; ++iter) {
        const auto g = gen.geometry(16, 10);
        const int classes = static_cast<int>(gen.integer(1, 5));
        const auto T = g.receptive_field() + gen.integer(0, 40 * g.stride());
        const auto events = gen.events(classes, T, static_cast<int>(gen.integer(0, 6)), g.receptive_field());
        const auto tt = build_targets(g, classes, events, T);
        for (std::size_t t = 0; t < tt.segments; ++t) {
            bool any = false;
            for (int w = 0; w < classes; ++w) {
                if (tt.label(t, w) != Label::Positive) continue;
                any = true;
                REQUIRE(std::isfinite(tt.offset(t, w)));
                REQUIRE(tt.length(t, w) > 0.0);
            }
            if (!any) REQUIRE(tt.s[t] == classes);
            else REQUIRE(tt.label(t, tt.s[t]) == Label::Positive);
        }
    }
}

TEST_CASE("property: encode/decode roundtrip") {
    testing::Gen gen(23);
    for (int i = 0; i < 10000; ++i) {
        const auto g = gen.geometry(200, 100);
        const auto t = gen.integer(0, 1000);
        const auto seg = g.segment_interval(t);
        const auto len = gen.integer(1, g.receptive_field());
        const auto b = seg.begin() + gen.integer(0, g.receptive_field() - len);
        const auto ol = encode_offset_length(g, t, Interval(b, b + len));
        const auto d = decode_offset_length(g, t, ol.offset, ol.length);
        REQUIRE(std::abs(d.begin - b) <= 1e-9 * std::max<double>(1.0, std::abs(b)));
        REQUIRE(std::abs(d.end - (b + len)) <= 1e-9 * static_cast<double>(b + len));
    }
}

TEST_CASE("property: iog is monotone in the window") {
    testing::Gen gen(24);
    for (int i = 0; i < 2000; ++i) {
        const auto s = gen.integer(1, 20);
        const auto r1 = s * gen.integer(1, 10);
        const auto r2 = r1 + gen.integer(0, 50);
        const FrameGeometry small(r1, s), large(r2, s);
        const auto b = gen.integer(0, r2 + 20);
        const Event e{0, Interval(b, b + gen.integer(1, 80))};
        const auto t = gen.integer(0, 3);
        REQUIRE(iog(large, t, e) >= iog(small, t, e));
        REQUIRE(iog(small, t, e) == doctest::Approx(iog_by_counting(small, t, e)).epsilon(1e-15));
    }
}
