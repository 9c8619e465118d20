#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "wordloc/corpus.hpp"
#include "wordloc/error.hpp"
#include "wordloc/wav.hpp"

using namespace wordloc;

namespace {

// Hand-assembled canonical 44-byte-header WAV.
std::vector<std::uint8_t> make_wav(int channels, int rate, int bits, int format, const std::vector<std::int16_t>& pcm) {
    std::vector<std::uint8_t> b;
    auto put = [&](std::uint32_t v, int n) {
        for (int i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto tag = [&](const char* s) { b.insert(b.end(), s, s + 4); };
    const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
    tag("RIFF");
    put(36 + data_bytes, 4);
    tag("WAVE");
    tag("fmt ");
    put(16, 4);
    put(static_cast<std::uint32_t>(format), 2);
    put(static_cast<std::uint32_t>(channels), 2);
    put(static_cast<std::uint32_t>(rate), 4);
    put(static_cast<std::uint32_t>(rate * channels * bits / 8), 4);
    put(static_cast<std::uint32_t>(channels * bits / 8), 2);
    put(static_cast<std::uint32_t>(bits), 2);
    tag("data");
    put(data_bytes, 4);
    for (auto s : pcm) put(static_cast<std::uint16_t>(s), 2);
    return b;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

std::string error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

CorpusConfig small_config() {
    CorpusConfig c;
    c.words = 4;
    c.utterances = 12;
    c.min_seconds = 1.0;
    c.max_seconds = 2.0;
    c.events_per_utterance = 3;
    return c;
}

} // namespace

TEST_CASE("wav: one second of silence") {
    const auto bytes = make_wav(1, 16000, 16, 1, std::vector<std::int16_t>(16000, 0));
    const auto a = decode_wav(bytes);
    CHECK(a.sample_rate == 16000);
    REQUIRE(a.samples.size() == 16000);
    for (double v : a.samples) REQUIRE(v == 0.0);
}

TEST_CASE("wav: full-scale square wave scales by 1/32768") {
    std::vector<std::int16_t> pcm;
    for (int i = 0; i < 100; ++i) pcm.push_back(i % 2 ? -32768 : 32767);
    const auto a = decode_wav(make_wav(1, 8000, 16, 1, pcm));
    CHECK(a.samples[0] == 32767.0 / 32768.0);
    CHECK(a.samples[1] == -1.0);
}

TEST_CASE("wav: unsupported inputs") {
    const std::vector<std::int16_t> pcm(10, 5);
    CHECK(error_of([&] { decode_wav(make_wav(2, 8000, 16, 1, pcm)); }).find("mono required") != std::string::npos);
    CHECK(error_of([&] { decode_wav(make_wav(1, 8000, 8, 1, pcm)); }).find("16-bit PCM") != std::string::npos);
    CHECK(error_of([&] { decode_wav(make_wav(1, 8000, 16, 3, pcm)); }).find("16-bit PCM") != std::string::npos);
    CHECK(error_of([&] { decode_wav(make_wav(1, 8000, 16, 1, pcm), 16000); }).find("sample rate") !=
          std::string::npos);
    const std::vector<std::uint8_t> junk = {'R', 'I', 'F', 'F', 0, 0};
    CHECK_THROWS_AS(decode_wav(junk), Error);
    CHECK_THROWS_AS(load_audio("/nonexistent/file.wav"), Error);
}

TEST_CASE("wav: encode/decode roundtrip quantizes") {
    testing::Gen g(301);
    for (int it = 0; it < 50; ++it) {
        auto x = g.signal(static_cast<std::size_t>(g.integer(0, 500)), 1.2);
        const auto a = decode_wav(encode_wav(x, 4000));
        REQUIRE(a.samples.size() == x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(a.samples[i] == quantize_pcm16(x[i]));
            CHECK(a.samples[i] >= -1.0);
            CHECK(a.samples[i] < 1.0);
        }
        // Quantized values are fixed points.
        for (double v : a.samples) CHECK(quantize_pcm16(v) == v);
    }
}

TEST_CASE("alignments: grouping and warnings") {
    testing::TempDir dir("align");
    const Lexicon lex({"a", "b"});
    write_file(dir.str("empty.tsv"), "");
    const auto empty = load_alignments(dir.str("empty.tsv"), lex);
    CHECK(empty.utterances.empty());
    REQUIRE(empty.warnings.size() == 1);
    CHECK(empty.warnings[0].find("empty") != std::string::npos);

    write_file(dir.str("three.tsv"), "u1\ta\t0\t10\nu1\tb\t20\t30\nu2\ta\t5\t9\n");
    const auto three = load_alignments(dir.str("three.tsv"), lex);
    REQUIRE(three.utterances.size() == 2);
    CHECK(three.utterances.at("u1").size() == 2);
    CHECK(three.utterances.at("u2").size() == 1);
    CHECK(three.dropped_records == 0);

    write_file(dir.str("drop.tsv"), "u1\ta\t0\t10\nu1\tx\t20\t30\nu1\ty\t40\t50\nu2\tb\t0\t5\nu2\ta\t9\t12\n");
    const auto drop = load_alignments(dir.str("drop.tsv"), lex);
    CHECK(drop.drop_fraction() == doctest::Approx(0.4));
    bool warned = false;
    for (const auto& w : drop.warnings) warned = warned || w.find("40%") != std::string::npos;
    CHECK(warned);
}

TEST_CASE("alignments: roundtrip and malformed input") {
    testing::TempDir dir("align-rt");
    const std::vector<AlignmentRecord> recs = {{"u1", "yes", 0, 100}, {"u2", "no", 5, 6}};
    write_alignment_records(dir.str("a.tsv"), recs);
    CHECK(read_alignment_records(dir.str("a.tsv")) == recs);

    write_file(dir.str("bad.tsv"), "u1\ta\t0\t10\nu1\ta\tzero\t10\n");
    CHECK(error_of([&] { read_alignment_records(dir.str("bad.tsv")); }).find("line 2") != std::string::npos);
    write_file(dir.str("inv.tsv"), "u1\ta\t10\t10\n");
    CHECK(error_of([&] { read_alignment_records(dir.str("inv.tsv")); }).find("begin >= end") != std::string::npos);
    write_file(dir.str("short.tsv"), "u1\ta\t10\n");
    CHECK_THROWS_AS(read_alignment_records(dir.str("short.tsv")), Error);
}

TEST_CASE("lexicon by frequency breaks ties alphabetically") {
    const std::vector<AlignmentRecord> recs = {
        {"u", "c", 0, 1}, {"u", "b", 0, 1}, {"u", "a", 0, 1}, {"u", "c", 2, 3}, {"u", "b", 2, 3}};
    const auto lex = lexicon_by_frequency(recs, 2);
    CHECK(lex.words() == std::vector<std::string>{"b", "c"});
}

TEST_CASE("generator is deterministic") {
    const auto a = generate_synthetic(small_config());
    const auto b = generate_synthetic(small_config());
    REQUIRE(a.utterances.size() == b.utterances.size());
    for (std::size_t i = 0; i < a.utterances.size(); ++i) {
        CHECK(a.utterances[i].samples == b.utterances[i].samples);
        REQUIRE(a.utterances[i].events.size() == b.utterances[i].events.size());
        for (std::size_t k = 0; k < a.utterances[i].events.size(); ++k) {
            CHECK(a.utterances[i].events[k].span == b.utterances[i].events[k].span);
            CHECK(a.utterances[i].events[k].word == b.utterances[i].events[k].word);
        }
    }
    auto other = small_config();
    other.seed = 8;
    CHECK(generate_synthetic(other).utterances[0].samples != a.utterances[0].samples);
}

TEST_CASE("generator layout: counts, gaps, durations, splits") {
    CorpusConfig c;
    c.utterances = 200;
    const auto corpus = generate_synthetic(c);
    std::size_t events = 0;
    for (const auto& u : corpus.utterances) {
        const auto T = static_cast<std::int64_t>(u.samples.size());
        CHECK(T >= 2 * c.sample_rate);
        CHECK(T <= 6 * c.sample_rate);
        events += u.events.size();
        std::int64_t prev_end = 0;
        for (const auto& e : u.events) {
            CHECK(e.span.begin() - prev_end >= c.min_gap);
            const auto& t = corpus.bank.templates()[static_cast<std::size_t>(e.word)];
            CHECK(e.span.length() >= t.min_samples);
            CHECK(e.span.length() <= t.max_samples);
            prev_end = e.span.end();
        }
        CHECK(T - prev_end >= c.min_gap);
    }
    CHECK(events == 600);

    std::set<std::string> all;
    for (const auto* s : {&corpus.train, &corpus.dev, &corpus.test})
        for (const auto& id : *s) CHECK(all.insert(id).second);
    CHECK(all.size() == 200);
    CHECK(corpus.dev.size() == 40);
    CHECK(corpus.test.size() == 40);
}

TEST_CASE("generator: templates are mutually dissimilar") {
    CorpusConfig c;
    const auto corpus = generate_synthetic(c);
    for (int a = 0; a < c.words; ++a)
        for (int b = a + 1; b < c.words; ++b) CHECK(corpus.bank.max_cross_correlation(a, b) < c.max_template_correlation);
}

TEST_CASE("generator: sweeps are separated in frequency") {
    // Few words leave plenty of room, so the separation is never relaxed.
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const SyntheticWordBank bank(4, 2000, 100, 200, seed, 0.5, 0.3);
        const auto& t = bank.templates();
        REQUIRE(t.size() == 4);
        for (std::size_t a = 0; a < t.size(); ++a) {
            CHECK(t[a].start_hz >= 150.0);
            CHECK(t[a].start_hz <= 850.0);
            for (std::size_t b = a + 1; b < t.size(); ++b)
                CHECK(std::max(std::abs(t[a].start_hz - t[b].start_hz), std::abs(t[a].end_hz - t[b].end_hz)) >= 300.0);
        }
    }
}

TEST_CASE("generator: noise level matches the requested SNR") {
    auto clean_cfg = small_config();
    clean_cfg.snr_db = std::numeric_limits<double>::infinity();
    const auto clean = generate_synthetic(clean_cfg);
    for (double snr : {10.0, 0.0}) {
        auto cfg = small_config();
        cfg.snr_db = snr;
        const auto noisy = generate_synthetic(cfg);
        for (std::size_t i = 0; i < clean.utterances.size(); ++i) {
            const auto& x = clean.utterances[i];
            const auto& y = noisy.utterances[i];
            REQUIRE(x.samples.size() == y.samples.size());
            double ps = 0, pn = 0;
            std::int64_t ns = 0;
            for (const auto& e : x.events) {
                for (auto k = e.span.begin(); k < e.span.end(); ++k) ps += x.samples[static_cast<std::size_t>(k)] * x.samples[static_cast<std::size_t>(k)];
                ns += e.span.length();
            }
            for (std::size_t k = 0; k < x.samples.size(); ++k) pn += std::pow(y.samples[k] - x.samples[k], 2);
            const double measured = 10 * std::log10((ps / static_cast<double>(ns)) / (pn / static_cast<double>(x.samples.size())));
            CHECK(std::abs(measured - snr) <= 1.0);
        }
    }
    // Infinite SNR leaves silence between events exactly zero.
    const auto& u = clean.utterances[0];
    for (std::int64_t k = 0; k < u.events[0].span.begin(); ++k) CHECK(u.samples[static_cast<std::size_t>(k)] == 0.0);
}

TEST_CASE("generator: matched filtering recovers every alignment") {
    auto cfg = small_config();
    cfg.snr_db = std::numeric_limits<double>::infinity();
    const auto corpus = generate_synthetic(cfg);
    for (const auto& u : corpus.utterances) {
        for (const auto& e : u.events) {
            const auto tpl = corpus.bank.render(e.word, static_cast<int>(e.span.length()), 1.0);
            double et = 0;
            for (double v : tpl) et += v * v;
            std::int64_t best_lag = -1;
            double best = -1;
            const auto T = static_cast<std::int64_t>(u.samples.size());
            const auto L = static_cast<std::int64_t>(tpl.size());
            for (std::int64_t lag = 0; lag + L <= T; ++lag) {
                double acc = 0, ex = 0;
                for (std::int64_t j = 0; j < L; ++j) {
                    const double v = u.samples[static_cast<std::size_t>(lag + j)];
                    acc += v * tpl[static_cast<std::size_t>(j)];
                    ex += v * v;
                }
                if (ex <= 0) continue;
                const double ncc = acc / std::sqrt(ex * et);
                if (ncc > best) {
                    best = ncc;
                    best_lag = lag;
                }
            }
            CHECK(std::abs(best_lag - e.span.begin()) <= 1);
            CHECK(std::abs(best_lag + L - e.span.end()) <= 1);
        }
    }
}

TEST_CASE("generator: argument errors") {
    auto c = small_config();
    c.events_per_utterance = 20;
    CHECK(error_of([&] { generate_synthetic(c); }).find("infeasible packing") != std::string::npos);
    c = small_config();
    c.words = 1;
    CHECK_THROWS_AS(generate_synthetic(c), Error);
    c = small_config();
    c.dev_fraction = 0.7;
    c.test_fraction = 0.7;
    CHECK_THROWS_AS(generate_synthetic(c), Error);
}

TEST_CASE("corpus directory roundtrip") {
    testing::TempDir dir("corpus");
    const auto cfg = small_config();
    const auto corpus = generate_synthetic(cfg);
    const auto summary = write_corpus(corpus, cfg, dir.path());
    CHECK(summary.utterances == 12);
    CHECK(summary.events == 36);
    for (const char* f : {"lexicon.txt", "alignments.tsv", "train.lst", "dev.lst", "test.lst", "corpus.json"})
        CHECK(std::filesystem::exists(dir.path() / f));
    const auto train = load_corpus_split(dir.path(), "train");
    CHECK(train.lexicon == corpus.lexicon);
    CHECK(train.sample_rate == cfg.sample_rate);
    REQUIRE(train.utterances.size() == corpus.train.size());
    for (const auto& u : train.utterances) {
        const auto& orig = corpus.utterances[static_cast<std::size_t>(std::stoi(u.id.substr(3)))];
        CHECK(u.samples == orig.samples);
        CHECK(u.events.size() == orig.events.size());
    }
    CHECK_THROWS_AS(load_corpus_split(dir.path(), "validation"), Error);
    CHECK_THROWS_AS(load_corpus_split(dir.path() / "missing", "train"), Error);
}
