#include "wordloc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wordloc/error.hpp"
#include "wordloc/wav.hpp"

namespace wordloc {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) out.push_back(f);
    return out;
}

std::int64_t parse_int(const std::string& s, std::size_t lineno) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::logic_error&) {
    }
    fail("alignment line " + std::to_string(lineno) + ": bad sample index '" + s + "'");
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) usage_error("cannot write '" + path.string() + "'");
    return out;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

std::string utterance_id(int index) {
    std::ostringstream os;
    os << "utt" << std::setw(5) << std::setfill('0') << index;
    return os.str();
}

std::string word_name(int index) {
    std::ostringstream os;
    os << "w" << std::setw(2) << std::setfill('0') << index;
    return os.str();
}

} // namespace

std::vector<AlignmentRecord> read_alignment_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open alignment file '" + path + "'");
    std::vector<AlignmentRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("utterance_id", 0) == 0) continue;
        const auto f = split_tabs(line);
        if (f.size() != 4) fail("alignment line " + std::to_string(lineno) + ": expected 4 tab-separated fields");
        AlignmentRecord r{f[0], f[1], parse_int(f[2], lineno), parse_int(f[3], lineno)};
        if (r.begin >= r.end) fail("alignment line " + std::to_string(lineno) + ": begin >= end");
        if (r.begin < 0) fail("alignment line " + std::to_string(lineno) + ": negative begin");
        out.push_back(std::move(r));
    }
    return out;
}

void write_alignment_records(const std::string& path, std::span<const AlignmentRecord> records) {
    auto out = open_output(path);
    out << "utterance_id\tword\tbegin_sample\tend_sample\n";
    for (const auto& r : records) out << r.utterance << '\t' << r.word << '\t' << r.begin << '\t' << r.end << '\n';
    if (!out) usage_error("failed writing '" + path + "'");
}

LoadedAlignments group_alignments(std::span<const AlignmentRecord> records, const Lexicon& lexicon) {
    LoadedAlignments out;
    out.total_records = records.size();
    if (records.empty()) out.warnings.push_back("alignment file is empty");
    for (const auto& r : records) {
        const auto w = lexicon.index_of(r.word);
        if (!w) {
            ++out.dropped_records;
            continue;
        }
        out.utterances[r.utterance].push_back(Event{*w, Interval(r.begin, r.end)});
    }
    std::size_t overlapping = 0;
    for (auto& [id, events] : out.utterances) {
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.span.begin() < b.span.begin(); });
        for (std::size_t i = 1; i < events.size(); ++i) {
            if (events[i].span.begin() < events[i - 1].span.end()) ++overlapping;
        }
    }
    if (overlapping) out.warnings.push_back(std::to_string(overlapping) + " overlapping in-lexicon events accepted");
    if (out.dropped_records) {
        std::ostringstream os;
        os << "dropped " << out.dropped_records << " of " << out.total_records << " records ("
           << std::setprecision(4) << 100.0 * out.drop_fraction() << "%) outside the lexicon";
        out.warnings.push_back(os.str());
    }
    return out;
}

LoadedAlignments load_alignments(const std::string& path, const Lexicon& lexicon) {
    return group_alignments(read_alignment_records(path), lexicon);
}

Lexicon lexicon_by_frequency(std::span<const AlignmentRecord> records, std::size_t top_n) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.word];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > top_n) ranked.resize(top_n);
    std::vector<std::string> words;
    for (auto& [w, n] : ranked) words.push_back(w);
    return Lexicon(std::move(words));
}

Lexicon read_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open lexicon '" + path + "'");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return Lexicon(std::move(words));
}

void write_lexicon(const std::string& path, const Lexicon& lexicon) {
    auto out = open_output(path);
    for (const auto& w : lexicon.words()) out << w << '\n';
}

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open manifest '" + path + "'");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

SyntheticWordBank::SyntheticWordBank(int words, int sample_rate, int min_samples, int max_samples,
                                     std::uint64_t seed, double max_correlation, double min_separation)
    : sample_rate_(sample_rate) {
    if (words < 1) fail("word bank needs at least one word");
    if (min_samples < 8 || max_samples < min_samples) fail("invalid word duration range");
    // Each word owns a +-20% band around a nominal duration when the range allows.
    const double nominal_lo = std::min<double>(min_samples / 0.8, max_samples);
    const double nominal_hi = std::max<double>(max_samples / 1.2, nominal_lo);
    const double nyquist = 0.5 * sample_rate;
    auto rng = stream_rng(seed, 0, 7);
    // Very low sweeps look alike to short first-layer kernels, so keep to the
    // upper part of the band.
    std::uniform_real_distribution<double> freq(0.15 * nyquist, 0.85 * nyquist);
    std::uniform_real_distribution<double> dur(nominal_lo, nominal_hi);
    // Sweeps must also differ audibly at one end. The spacing relaxes when a
    // large lexicon cannot be packed at the default.
    double separation = min_separation * nyquist;

    int rejected = 0;
    for (int attempt = 0; static_cast<int>(templates_.size()) < words; ++attempt) {
        if (attempt > 200000) fail("could not draw separable word templates");
        if (rejected == 5000) {
            separation *= 0.8;
            rejected = 0;
        }
        const double nominal = dur(rng);
        WordTemplate t;
        t.start_hz = freq(rng);
        t.end_hz = freq(rng);
        t.min_samples = std::max(min_samples, static_cast<int>(std::lround(0.8 * nominal)));
        t.max_samples = std::min(max_samples, static_cast<int>(std::lround(1.2 * nominal)));
        bool ok = true;
        for (const auto& o : templates_) {
            ok = ok && std::max(std::abs(o.start_hz - t.start_hz), std::abs(o.end_hz - t.end_hz)) >= separation;
        }
        templates_.push_back(t);
        const int k = static_cast<int>(templates_.size()) - 1;
        for (int j = 0; j < k && ok; ++j) ok = max_cross_correlation(j, k) < max_correlation;
        if (!ok) {
            templates_.pop_back();
            ++rejected;
        }
    }
}

std::vector<double> SyntheticWordBank::render(int word, int duration, double amplitude) const {
    const auto& t = templates_.at(static_cast<std::size_t>(word));
    std::vector<double> out(static_cast<std::size_t>(duration));
    const double sr = sample_rate_;
    const int ramp = std::max(1, std::min(8, duration / 4));
    const double sweep = (t.end_hz - t.start_hz) / (2.0 * duration * sr);
    for (int n = 0; n < duration; ++n) {
        const double phase = 2.0 * std::numbers::pi * (t.start_hz * n / sr + sweep * n * n);
        double env = 1.0;
        const int edge = std::min(n, duration - 1 - n);
        if (edge < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (edge + 0.5) / ramp);
        out[static_cast<std::size_t>(n)] = amplitude * env * std::sin(phase);
    }
    return out;
}

double SyntheticWordBank::max_cross_correlation(int a, int b) const {
    const auto& ta = templates_.at(static_cast<std::size_t>(a));
    const auto& tb = templates_.at(static_cast<std::size_t>(b));
    const auto x = render(a, (ta.min_samples + ta.max_samples) / 2, 1.0);
    const auto y = render(b, (tb.min_samples + tb.max_samples) / 2, 1.0);
    double nx = 0.0, ny = 0.0;
    for (double v : x) nx += v * v;
    for (double v : y) ny += v * v;
    const double norm = std::sqrt(nx * ny);
    double best = 0.0;
    const auto nxs = static_cast<std::ptrdiff_t>(x.size());
    const auto nys = static_cast<std::ptrdiff_t>(y.size());
    for (std::ptrdiff_t lag = -(nys - 1); lag < nxs; ++lag) {
        double acc = 0.0;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, -lag); j < nys && j + lag < nxs; ++j) {
            acc += x[static_cast<std::size_t>(j + lag)] * y[static_cast<std::size_t>(j)];
        }
        best = std::max(best, std::abs(acc) / norm);
    }
    return best;
}

SyntheticCorpus generate_synthetic(const CorpusConfig& cfg) {
    if (cfg.words < 2) usage_error("synthetic corpus needs at least 2 words");
    if (cfg.utterances < 1) usage_error("synthetic corpus needs at least one utterance");
    if (cfg.events_per_utterance < 0) usage_error("events per utterance must be non-negative");
    if (cfg.sample_rate < 100) usage_error("sample rate too low");
    if (!(cfg.min_seconds > 0.0) || cfg.max_seconds < cfg.min_seconds) usage_error("invalid utterance length range");
    if (cfg.min_gap < 0) usage_error("minimum gap must be non-negative");
    if (cfg.dev_fraction < 0.0 || cfg.test_fraction < 0.0 || cfg.dev_fraction + cfg.test_fraction > 1.0) {
        usage_error("split fractions must be non-negative and sum to at most 1");
    }
    if (!(cfg.min_amplitude > 0.0) || cfg.max_amplitude < cfg.min_amplitude || cfg.max_amplitude > 1.0) {
        usage_error("invalid amplitude range");
    }
    if (!(cfg.max_template_correlation > 0.0 && cfg.max_template_correlation <= 1.0)) {
        usage_error("template correlation bound must lie in (0, 1]");
    }
    if (!(cfg.min_sweep_separation >= 0.0 && cfg.min_sweep_separation < 0.7)) {
        usage_error("sweep separation must lie in [0, 0.7)");
    }

    const auto min_len = static_cast<std::int64_t>(std::llround(cfg.min_seconds * cfg.sample_rate));
    const auto max_len = static_cast<std::int64_t>(std::llround(cfg.max_seconds * cfg.sample_rate));
    const std::int64_t worst = static_cast<std::int64_t>(cfg.events_per_utterance) * cfg.max_word_samples +
                               static_cast<std::int64_t>(cfg.events_per_utterance + 1) * cfg.min_gap;
    if (worst > min_len) {
        fail("infeasible packing: " + std::to_string(cfg.events_per_utterance) + " events of up to " +
             std::to_string(cfg.max_word_samples) + " samples do not fit in " + std::to_string(min_len) +
             " samples");
    }

    SyntheticCorpus corpus;
    corpus.sample_rate = cfg.sample_rate;
    corpus.bank = SyntheticWordBank(cfg.words, cfg.sample_rate, cfg.min_word_samples, cfg.max_word_samples, cfg.seed,
                                    cfg.max_template_correlation, cfg.min_sweep_separation);
    std::vector<std::string> names;
    for (int w = 0; w < cfg.words; ++w) names.push_back(word_name(w));
    corpus.lexicon = Lexicon(names);

    for (int u = 0; u < cfg.utterances; ++u) {
        auto rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(u), 1);
        std::uniform_int_distribution<std::int64_t> len_dist(min_len, max_len);
        const std::int64_t T = len_dist(rng);

        struct Planned {
            int word;
            int duration;
            double amplitude;
        };
        std::vector<Planned> plan;
        std::int64_t busy = 0;
        std::uniform_int_distribution<int> word_dist(0, cfg.words - 1);
        std::uniform_real_distribution<double> amp_dist(cfg.min_amplitude, cfg.max_amplitude);
        for (int e = 0; e < cfg.events_per_utterance; ++e) {
            const int w = word_dist(rng);
            const auto& t = corpus.bank.templates()[static_cast<std::size_t>(w)];
            std::uniform_int_distribution<int> dur_dist(t.min_samples, t.max_samples);
            plan.push_back({w, dur_dist(rng), amp_dist(rng)});
            busy += plan.back().duration;
        }
        const std::int64_t slack = T - busy - static_cast<std::int64_t>(cfg.events_per_utterance + 1) * cfg.min_gap;
        std::uniform_int_distribution<std::int64_t> slack_dist(0, slack);
        std::vector<std::int64_t> offsets(plan.size());
        for (auto& o : offsets) o = slack_dist(rng);
        std::sort(offsets.begin(), offsets.end());

        Utterance utt;
        utt.id = utterance_id(u);
        std::vector<double> clean(static_cast<std::size_t>(T), 0.0);
        std::int64_t cursor = 0;
        for (std::size_t e = 0; e < plan.size(); ++e) {
            const std::int64_t begin = cursor + cfg.min_gap + offsets[e] - (e ? offsets[e - 1] : 0);
            const auto wave = corpus.bank.render(plan[e].word, plan[e].duration, plan[e].amplitude);
            std::copy(wave.begin(), wave.end(), clean.begin() + begin);
            utt.events.push_back(Event{plan[e].word, Interval(begin, begin + plan[e].duration)});
            cursor = begin + plan[e].duration;
        }

        double signal_power = 0.0;
        std::int64_t signal_samples = 0;
        for (const auto& ev : utt.events) {
            for (auto i = ev.span.begin(); i < ev.span.end(); ++i) signal_power += clean[i] * clean[i];
            signal_samples += ev.span.length();
        }
        utt.samples = clean;
        if (std::isfinite(cfg.snr_db) && signal_samples > 0) {
            signal_power /= static_cast<double>(signal_samples);
            const double sigma = std::sqrt(signal_power / std::pow(10.0, cfg.snr_db / 10.0));
            auto noise_rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(u), 2);
            std::normal_distribution<double> noise(0.0, sigma);
            for (auto& x : utt.samples) x += noise(noise_rng);
        }
        for (auto& x : utt.samples) x = quantize_pcm16(x);
        corpus.utterances.push_back(std::move(utt));
    }

    // Disjoint, exhaustive splits from a seeded permutation.
    std::vector<int> order(static_cast<std::size_t>(cfg.utterances));
    for (int i = 0; i < cfg.utterances; ++i) order[static_cast<std::size_t>(i)] = i;
    auto split_rng = stream_rng(cfg.seed, 0, 3);
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * cfg.utterances));
    const auto n_dev = static_cast<std::size_t>(std::llround(cfg.dev_fraction * cfg.utterances));
    const std::size_t n_train = order.size() - std::min(order.size(), n_test + n_dev);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& id = corpus.utterances[static_cast<std::size_t>(order[i])].id;
        if (i < n_train) {
            corpus.train.push_back(id);
        } else if (i < n_train + n_dev) {
            corpus.dev.push_back(id);
        } else {
            corpus.test.push_back(id);
        }
    }
    std::sort(corpus.train.begin(), corpus.train.end());
    std::sort(corpus.dev.begin(), corpus.dev.end());
    std::sort(corpus.test.begin(), corpus.test.end());
    return corpus;
}

CorpusSummary write_corpus(const SyntheticCorpus& corpus, const CorpusConfig& cfg, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir / "wav", ec);
    if (ec) usage_error("cannot create output directory '" + out_dir.string() + "': " + ec.message());

    CorpusSummary summary;
    std::vector<AlignmentRecord> records;
    for (const auto& u : corpus.utterances) {
        save_wav((out_dir / "wav" / (u.id + ".wav")).string(), u.samples, corpus.sample_rate);
        for (const auto& e : u.events) {
            records.push_back({u.id, corpus.lexicon.word(e.word), e.span.begin(), e.span.end()});
        }
        summary.seconds += static_cast<double>(u.samples.size()) / corpus.sample_rate;
    }
    summary.utterances = corpus.utterances.size();
    summary.events = records.size();
    summary.train = corpus.train.size();
    summary.dev = corpus.dev.size();
    summary.test = corpus.test.size();

    write_alignment_records((out_dir / "alignments.tsv").string(), records);
    write_lexicon((out_dir / "lexicon.txt").string(), corpus.lexicon);
    auto write_list = [&](const char* name, const std::vector<std::string>& ids) {
        auto out = open_output(out_dir / name);
        for (const auto& id : ids) out << id << '\n';
    };
    write_list("train.lst", corpus.train);
    write_list("dev.lst", corpus.dev);
    write_list("test.lst", corpus.test);

    nlohmann::json j;
    j["sample_rate"] = corpus.sample_rate;
    j["seed"] = cfg.seed;
    j["words"] = cfg.words;
    j["utterances"] = summary.utterances;
    j["events"] = summary.events;
    j["events_per_utterance"] = cfg.events_per_utterance;
    j["seconds"] = summary.seconds;
    j["snr_db"] = std::isfinite(cfg.snr_db) ? nlohmann::json(cfg.snr_db) : nlohmann::json("inf");
    j["max_template_correlation"] = cfg.max_template_correlation;
    j["min_sweep_separation"] = cfg.min_sweep_separation;
    j["splits"] = {{"train", summary.train}, {"dev", summary.dev}, {"test", summary.test}};
    auto& templates = j["templates"] = nlohmann::json::array();
    for (std::size_t w = 0; w < corpus.bank.templates().size(); ++w) {
        const auto& t = corpus.bank.templates()[w];
        templates.push_back({{"word", corpus.lexicon.word(static_cast<int>(w))},
                             {"start_hz", t.start_hz},
                             {"end_hz", t.end_hz},
                             {"min_samples", t.min_samples},
                             {"max_samples", t.max_samples}});
    }
    auto out = open_output(out_dir / "corpus.json");
    out << j.dump(2) << '\n';
    return summary;
}

CorpusSummary generate_corpus(const CorpusConfig& config, const fs::path& out_dir) {
    return write_corpus(generate_synthetic(config), config, out_dir);
}

CorpusSplit load_corpus_split(const fs::path& dir, const std::string& split) {
    if (split != "train" && split != "dev" && split != "test") usage_error("unknown split '" + split + "'");
    CorpusSplit out;
    out.lexicon = read_lexicon((dir / "lexicon.txt").string());
    std::optional<int> rate;
    if (fs::exists(dir / "corpus.json")) {
        std::ifstream in(dir / "corpus.json");
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_object() && j.contains("sample_rate")) rate = j["sample_rate"].get<int>();
    }
    auto aligned = load_alignments((dir / "alignments.tsv").string(), out.lexicon);
    out.warnings = aligned.warnings;
    for (const auto& id : read_manifest((dir / (split + ".lst")).string())) {
        auto audio = load_audio((dir / "wav" / (id + ".wav")).string(), rate);
        if (!rate) rate = audio.sample_rate;
        Utterance u;
        u.id = id;
        u.samples = std::move(audio.samples);
        if (auto it = aligned.utterances.find(id); it != aligned.utterances.end()) u.events = it->second;
        for (const auto& e : u.events) {
            if (e.span.end() > static_cast<std::int64_t>(u.samples.size())) {
                fail("alignment for " + id + " extends past the end of its audio");
            }
        }
        out.utterances.push_back(std::move(u));
    }
    out.sample_rate = rate.value_or(0);
    return out;
}

} // namespace wordloc
