#include "wordloc/wordloc.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wordloc/checkpoint.hpp"
#include "wordloc/config.hpp"
#include "wordloc/error.hpp"
#include "wordloc/evaluation.hpp"
#include "wordloc/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wordloc;

struct wl_config {
    RunConfig config;
};

struct wl_model {
    Model model;
};

struct wl_stream {
    const wl_model* owner;
    StreamDetector detector;
};

namespace {

thread_local std::string g_last_error;

template <class Fn>
wl_status guard(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return WL_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return e.kind() == ErrorKind::Usage ? WL_ERR_USAGE : WL_ERR_DOMAIN;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return WL_ERR_DOMAIN;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return WL_ERR_DOMAIN;
    }
}

void require(const void* p, const char* what) {
    if (!p) usage_error(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void put_events(const std::vector<Proposal>& found, wl_event** events, size_t* n) {
    require(events, "events");
    require(n, "n_events");
    *events = nullptr;
    *n = found.size();
    if (found.empty()) return;
    auto* out = static_cast<wl_event*>(std::malloc(found.size() * sizeof(wl_event)));
    if (!out) throw std::bad_alloc();
    for (size_t i = 0; i < found.size(); ++i) out[i] = {found[i].word, found[i].begin, found[i].end, found[i].score};
    *events = out;
}

DecodeOptions decode_options(double lambda, double nms_iou) {
    DecodeOptions o;
    o.lambda = lambda;
    o.nms_iou = nms_iou;
    validate(o);
    return o;
}

// Output directories are created on demand; failure is a usage error.
void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) usage_error("cannot create output directory " + dir.string());
    const auto probe = dir / ".wordloc-write-test";
    {
        std::ofstream out(probe);
        if (!out) usage_error("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) usage_error("cannot write " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) usage_error("cannot write " + path.string());
}

json scores_json(const DetectionCounts& c, const DetectionScores& s) {
    return {{"true_positives", c.true_positives},
            {"false_positives", c.false_positives},
            {"false_negatives", c.false_negatives},
            {"accurate", c.accurate},
            {"precision", s.precision},
            {"recall", s.recall},
            {"f1", s.f1},
            {"actual_accuracy", s.actual_accuracy},
            {"avg_iou", s.avg_iou},
            {"undefined", s.undefined}};
}

// Truth and detections keyed by utterance with a shared word index.
struct ScoringInput {
    Lexicon words;
    std::vector<std::string> utterances;
    std::vector<ScoredUtterance> scored;
    std::vector<std::string> warnings;
};

ScoringInput scoring_input(const char* truth_path, const char* events_path, const char* manifest) {
    require(truth_path, "truth");
    require(events_path, "events");
    const auto truth = read_alignment_records(truth_path);
    const auto events = read_event_records(std::string(events_path));

    std::set<std::string> vocabulary;
    for (const auto& r : truth) vocabulary.insert(r.word);
    for (const auto& r : events) vocabulary.insert(r.word);
    ScoringInput in;
    in.words = Lexicon(std::vector<std::string>(vocabulary.begin(), vocabulary.end()));
    const auto grouped = group_alignments(truth, in.words);
    in.warnings = grouped.warnings;

    if (manifest) {
        in.utterances = read_manifest(manifest);
    } else {
        for (const auto& [id, _] : grouped.utterances) in.utterances.push_back(id);
    }
    std::map<std::string, std::size_t> slot;
    for (const auto& id : in.utterances) {
        if (!slot.emplace(id, slot.size()).second) fail("utterance " + id + " listed twice");
    }
    in.scored.resize(in.utterances.size());
    for (const auto& [id, evs] : grouped.utterances) {
        if (auto it = slot.find(id); it != slot.end()) in.scored[it->second].truth = evs;
    }
    std::size_t foreign = 0;
    for (const auto& r : events) {
        auto it = slot.find(r.utterance);
        if (it == slot.end()) {
            ++foreign;
            continue;
        }
        Proposal p;
        p.word = *in.words.index_of(r.word);
        p.begin = static_cast<double>(r.begin);
        p.end = static_cast<double>(r.end);
        p.score = r.score;
        in.scored[it->second].proposals.push_back(p);
    }
    if (foreign > 0) {
        in.warnings.push_back(std::to_string(foreign) + " event records belong to utterances outside the evaluated set");
    }
    return in;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace

extern "C" {

const char* wl_version(void) { return "1.0.0"; }

const char* wl_last_error(void) { return g_last_error.c_str(); }

void wl_string_free(char* s) { std::free(s); }

wl_status wl_config_new(wl_config** out) {
    return guard([&] {
        require(out, "out");
        *out = new wl_config();
    });
}

void wl_config_free(wl_config* config) { delete config; }

wl_status wl_config_load(wl_config* config, const char* path) {
    return guard([&] {
        require(config, "config");
        require(path, "path");
        config->config.load_file(path);
    });
}

wl_status wl_config_set(wl_config* config, const char* key, const char* value) {
    return guard([&] {
        require(config, "config");
        require(key, "key");
        require(value, "value");
        config->config.set(key, value);
    });
}

wl_status wl_config_get(const wl_config* config, const char* key, char** value) {
    return guard([&] {
        require(config, "config");
        require(key, "key");
        require(value, "value");
        *value = dup_string(config->config.get(key));
    });
}

wl_status wl_config_dump(const wl_config* config, char** text) {
    return guard([&] {
        require(config, "config");
        require(text, "text");
        *text = dup_string(config->config.dump());
    });
}

wl_status wl_config_write(const wl_config* config, const char* dir) {
    return guard([&] {
        require(config, "config");
        require(dir, "dir");
        ensure_dir(dir);
        config->config.write_to(dir);
    });
}

wl_status wl_generate(const wl_config* config, const char* out_dir, char** summary) {
    return guard([&] {
        require(config, "config");
        require(out_dir, "out_dir");
        const auto cc = config->config.corpus();
        ensure_dir(out_dir);
        const auto s = generate_corpus(cc, out_dir);
        RunConfig resolved = config->config;
        resolved.set("path.output", out_dir);
        resolved.write_to(out_dir);
        if (summary) {
            const json j = {{"output", out_dir},     {"utterances", s.utterances}, {"events", s.events},
                            {"seconds", s.seconds},  {"train", s.train},           {"dev", s.dev},
                            {"test", s.test},        {"words", cc.words},          {"seed", cc.seed}};
            *summary = dup_string(j.dump(2));
        }
    });
}

wl_status wl_train(const wl_config* config, const char* corpus_dir, const char* out_dir, const char* resume,
                   wl_epoch_fn on_epoch, void* user, char** summary) {
    return guard([&] {
        require(config, "config");
        require(corpus_dir, "corpus_dir");
        require(out_dir, "out_dir");
        const auto started = std::chrono::steady_clock::now();
        const RunConfig& rc = config->config;
        const TrainConfig tc = rc.training();
        ensure_dir(out_dir);
        const fs::path out(out_dir);

        auto data = load_corpus_split(corpus_dir, "train");
        json warnings = data.warnings;
        if (data.utterances.empty()) fail("corpus " + std::string(corpus_dir) + " has an empty train split");

        Model model;
        std::optional<TrainingState> state;
        std::vector<std::string> log_rows;
        if (resume) {
            auto ck = load_checkpoint(resume);
            if (!ck.training) fail("checkpoint " + std::string(resume) + " has no training state to resume");
            if (ck.model.lexicon.words() != data.lexicon.words()) fail("checkpoint lexicon differs from the corpus");
            model = std::move(ck.model);
            state = std::move(ck.training);
            std::ifstream old(fs::path(resume).parent_path() / "train_log.csv");
            std::string line;
            std::getline(old, line);
            while (std::getline(old, line)) {
                if (!line.empty() && std::stoi(line.substr(0, line.find(','))) < state->epochs_completed) {
                    log_rows.push_back(line);
                }
            }
        } else {
            model = make_model(rc.backbone(), data.lexicon, data.sample_rate, tc.seed);
        }

        RunConfig resolved = rc;
        resolved.set("path.corpus", corpus_dir);
        resolved.set("path.output", out_dir);
        resolved.write_to(out);

        const auto ckpt_path = (out / "checkpoint.wlc").string();
        auto callback = [&](const EpochLog& row, const Model& m, const TrainingState& st) {
            log_rows.push_back(training_log_row(row));
            std::string text = training_log_header() + "\n";
            for (const auto& r : log_rows) text += r + "\n";
            write_text(out / "train_log.csv", text);
            save_checkpoint(ckpt_path, m, &st);
            if (on_epoch) on_epoch(log_rows.back().c_str(), user);
        };
        auto result = train(data.utterances, std::move(model), tc, state, callback);
        if (result.log.empty()) save_checkpoint(ckpt_path, result.model, &result.state);

        json j = {{"checkpoint", ckpt_path},
                  {"epochs_completed", result.state.epochs_completed},
                  {"parameters", parameter_count(result.model.params)},
                  {"receptive_field", result.model.geometry().receptive_field()},
                  {"stride", result.model.geometry().stride()}};
        if (!result.log.empty()) {
            const auto& last = result.log.back().loss;
            j["final_loss"] = {{"L_pos", last.pos},     {"L_neg", last.neg},          {"L_o", last.offset},
                               {"L_l", last.length},    {"L_s", last.classifier},     {"total", last.total()}};
        }
        const auto dev = load_corpus_split(corpus_dir, "dev");
        if (!dev.utterances.empty()) {
            const auto cache = run_heads(result.model, dev.utterances);
            const auto grid = default_lambda_grid();
            const auto choice = tune_lambda(cache, dev.utterances, rc.decoding(), grid);
            j["dev_lambda"] = choice.lambda;
            j["dev_f1"] = choice.scores.f1;
            j["dev_avg_iou"] = choice.scores.avg_iou;
        }
        j["warnings"] = warnings;
        write_text(out / "summary.json", j.dump(2) + "\n");
        j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (summary) *summary = dup_string(j.dump(2));
    });
}

wl_status wl_model_load(const char* path, wl_model** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        auto ck = load_checkpoint(path);
        *out = new wl_model{std::move(ck.model)};
    });
}

void wl_model_free(wl_model* model) { delete model; }

wl_status wl_model_info(const wl_model* model, char** info) {
    return guard([&] {
        require(model, "model");
        require(info, "info");
        const auto& m = model->model;
        const json j = {{"backbone", m.spec.describe()},
                        {"receptive_field", m.geometry().receptive_field()},
                        {"stride", m.geometry().stride()},
                        {"feature_dim", m.spec.feature_dim()},
                        {"sample_rate", m.sample_rate},
                        {"parameters", parameter_count(m.params)},
                        {"lexicon", m.lexicon.words()}};
        *info = dup_string(j.dump(2));
    });
}

int wl_model_sample_rate(const wl_model* model) { return model ? model->model.sample_rate : 0; }

size_t wl_model_stride(const wl_model* model) {
    return model ? static_cast<size_t>(model->model.geometry().stride()) : 0;
}

size_t wl_model_receptive_field(const wl_model* model) {
    return model ? static_cast<size_t>(model->model.geometry().receptive_field()) : 0;
}

const char* wl_model_word(const wl_model* model, int index) {
    if (!model || index < 0 || index >= model->model.lexicon.size()) return nullptr;
    return model->model.lexicon.words()[static_cast<size_t>(index)].c_str();
}

wl_status wl_audio_load(const char* path, int expected_rate, double** samples, size_t* count, int* rate) {
    return guard([&] {
        require(path, "path");
        require(samples, "samples");
        require(count, "count");
        std::optional<int> expect;
        if (expected_rate > 0) expect = expected_rate;
        const auto audio = load_audio(path, expect);
        *samples = nullptr;
        *count = audio.samples.size();
        if (rate) *rate = audio.sample_rate;
        if (audio.samples.empty()) return;
        auto* buf = static_cast<double*>(std::malloc(audio.samples.size() * sizeof(double)));
        if (!buf) throw std::bad_alloc();
        std::memcpy(buf, audio.samples.data(), audio.samples.size() * sizeof(double));
        *samples = buf;
    });
}

void wl_samples_free(double* samples) { std::free(samples); }

wl_status wl_detect(const wl_model* model, const double* samples, size_t count, double lambda, double nms_iou,
                    wl_event** events, size_t* n_events) {
    return guard([&] {
        require(model, "model");
        if (count > 0) require(samples, "samples");
        const auto found = detect(model->model, std::span<const double>(samples, count), decode_options(lambda, nms_iou));
        put_events(found, events, n_events);
    });
}

void wl_events_free(wl_event* events) { std::free(events); }

wl_status wl_stream_open(const wl_model* model, double lambda, double nms_iou, wl_stream** out) {
    return guard([&] {
        require(model, "model");
        require(out, "out");
        *out = new wl_stream{model, StreamDetector(model->model, decode_options(lambda, nms_iou))};
    });
}

wl_status wl_stream_push(wl_stream* stream, const double* samples, size_t count, wl_event** events,
                         size_t* n_events) {
    return guard([&] {
        require(stream, "stream");
        if (count > 0) require(samples, "samples");
        put_events(stream->detector.push(std::span<const double>(samples, count)), events, n_events);
    });
}

wl_status wl_stream_finish(wl_stream* stream, wl_event** events, size_t* n_events) {
    return guard([&] {
        require(stream, "stream");
        put_events(stream->detector.finish(), events, n_events);
    });
}

void wl_stream_free(wl_stream* stream) { delete stream; }

wl_status wl_format_events(const wl_model* model, const char* utterance, const wl_event* events, size_t n,
                           int header, char** text) {
    return guard([&] {
        require(model, "model");
        require(utterance, "utterance");
        require(text, "text");
        if (n > 0) require(events, "events");
        std::ostringstream os;
        if (header) write_event_header(os);
        for (size_t i = 0; i < n; ++i) {
            const Proposal p{events[i].word, events[i].begin, events[i].end, events[i].score, 0};
            write_event_record(os, to_record(utterance, model->model.lexicon, p), model->model.sample_rate);
        }
        *text = dup_string(os.str());
    });
}

wl_status wl_evaluate(const wl_config* config, const char* truth, const char* events, const char* manifest,
                      char** report, char** table) {
    return guard([&] {
        require(config, "config");
        const double accuracy_iou = config->config.get_double("eval.accuracy_iou");
        if (!(accuracy_iou > 0.0 && accuracy_iou <= 1.0)) usage_error("accuracy IoU must be in (0, 1]");
        const auto in = scoring_input(truth, events, manifest);

        DetectionCounts total;
        std::vector<DetectionCounts> per_word(static_cast<size_t>(in.words.size()));
        for (const auto& u : in.scored) {
            const auto m = match_events(u.truth, u.proposals);
            total.add(m, accuracy_iou);
            for (int w = 0; w < in.words.size(); ++w) {
                std::vector<Event> t;
                std::vector<Proposal> p;
                for (const auto& e : u.truth) {
                    if (e.word == w) t.push_back(e);
                }
                for (const auto& q : u.proposals) {
                    if (q.word == w) p.push_back(q);
                }
                if (!t.empty() || !p.empty()) per_word[static_cast<size_t>(w)].add(match_events(t, p), accuracy_iou);
            }
        }
        const auto s = detection_scores(total);
        json j = scores_json(total, s);
        j["utterances"] = in.utterances.size();
        j["truths"] = total.truths();
        j["proposals"] = total.proposals();
        j["accuracy_iou"] = accuracy_iou;
        json words = json::object();
        std::ostringstream tab;
        tab << std::left << std::setw(16) << "word" << std::right << std::setw(7) << "truth" << std::setw(7) << "tp"
            << std::setw(7) << "fp" << std::setw(7) << "fn" << std::setw(11) << "precision" << std::setw(9)
            << "recall" << std::setw(9) << "f1" << std::setw(9) << "avg_iou" << '\n';
        auto row = [&](const std::string& name, const DetectionCounts& c, const DetectionScores& sc) {
            tab << std::left << std::setw(16) << name << std::right << std::setw(7) << c.truths() << std::setw(7)
                << c.true_positives << std::setw(7) << c.false_positives << std::setw(7) << c.false_negatives
                << std::setw(11) << fixed(sc.precision) << std::setw(9) << fixed(sc.recall) << std::setw(9)
                << fixed(sc.f1) << std::setw(9) << fixed(sc.avg_iou) << '\n';
        };
        for (int w = 0; w < in.words.size(); ++w) {
            const auto& c = per_word[static_cast<size_t>(w)];
            const auto sc = detection_scores(c);
            words[in.words.word(w)] = scores_json(c, sc);
            row(in.words.word(w), c, sc);
        }
        row("ALL", total, s);
        tab << "actual accuracy (IoU >= " << accuracy_iou << "): " << fixed(s.actual_accuracy) << '\n';
        j["per_word"] = words;
        j["warnings"] = in.warnings;
        if (report) *report = dup_string(j.dump(2));
        if (table) *table = dup_string(tab.str());
    });
}

wl_status wl_mtwv(const wl_config* config, const char* truth, const char* events, const char* keywords,
                  const char* manifest, double audio_seconds, const char* audio_dir, char** report, char** table) {
    return guard([&] {
        require(config, "config");
        require(keywords, "keywords");
        const double beta = config->config.get_double("mtwv.beta");
        if (!(beta >= 0.0) || !std::isfinite(beta)) usage_error("beta must be a non-negative number");
        const double fixed_lambda = config->config.get_double("infer.lambda");
        auto in = scoring_input(truth, events, manifest);

        double seconds = audio_seconds;
        if (!(seconds > 0.0)) {
            if (!audio_dir) usage_error("audio duration unknown: give a positive duration or an audio directory");
            seconds = 0.0;
            for (const auto& id : in.utterances) {
                const auto audio = load_audio((fs::path(audio_dir) / (id + ".wav")).string());
                seconds += static_cast<double>(audio.samples.size()) / audio.sample_rate;
            }
            if (!(seconds > 0.0)) fail("audio directory holds no audio for the evaluated utterances");
        }

        std::vector<int> ids;
        json unknown = json::array();
        for (const auto& k : read_manifest(keywords)) {
            if (auto w = in.words.index_of(k)) {
                ids.push_back(*w);
            } else {
                unknown.push_back(k);
            }
        }
        if (!unknown.empty()) in.warnings.push_back(std::to_string(unknown.size()) + " keywords never occur in truth or events");

        const auto res = mtwv_sweep(in.scored, ids, seconds, beta);
        json kws = json::array();
        std::ostringstream tab;
        tab << std::left << std::setw(16) << "keyword" << std::right << std::setw(10) << "lambda*" << std::setw(6)
            << "occ" << std::setw(6) << "hits" << std::setw(6) << "fa" << std::setw(10) << "p_miss" << std::setw(12)
            << "p_fa" << '\n';
        for (const auto& k : res.keywords) {
            const auto& name = in.words.word(k.keyword);
            kws.push_back({{"keyword", name},
                           {"lambda", std::isfinite(k.lambda) ? json(k.lambda) : json("inf")},
                           {"occurrences", k.occurrences},
                           {"hits", k.hits},
                           {"false_alarms", k.false_alarms},
                           {"p_miss", k.p_miss},
                           {"p_fa", k.p_fa}});
            tab << std::left << std::setw(16) << name << std::right << std::setw(10)
                << (std::isfinite(k.lambda) ? fixed(k.lambda) : std::string("inf")) << std::setw(6) << k.occurrences
                << std::setw(6) << k.hits << std::setw(6) << k.false_alarms << std::setw(10) << fixed(k.p_miss)
                << std::setw(12) << std::scientific << std::setprecision(3) << k.p_fa << std::defaultfloat << '\n';
        }
        json excluded = json::array();
        for (int k : res.excluded) excluded.push_back(in.words.word(k));
        for (const auto& k : unknown) excluded.push_back(k);
        const double at_fixed = res.keywords.empty() ? 0.0 : twv_at(in.scored, ids, seconds, fixed_lambda, beta);
        tab << "MTWV " << fixed(res.mtwv, 6) << "  (TWV at lambda " << fixed_lambda << ": " << fixed(at_fixed, 6)
            << ", " << res.keywords.size() << " keywords, " << fixed(seconds, 1) << " s)\n";
        if (!excluded.empty()) tab << "excluded (no occurrences): " << excluded.size() << '\n';

        const json j = {{"mtwv", res.mtwv},          {"beta", beta},
                        {"audio_seconds", seconds},  {"keywords", kws},
                        {"excluded", excluded},      {"twv_at_lambda", {{"lambda", fixed_lambda}, {"twv", at_fixed}}},
                        {"warnings", in.warnings}};
        if (report) *report = dup_string(j.dump(2));
        if (table) *table = dup_string(tab.str());
    });
}

} // extern "C"
