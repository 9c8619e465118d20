// wordloc: corpus generation, training, inference and scoring from the shell.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wordloc/wordloc.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
    int code;
    std::string message;
};

void check(wl_status s) {
    if (s != WL_OK) throw Failure{static_cast<int>(s), wl_last_error()};
}

[[noreturn]] void usage(const std::string& message) { throw Failure{WL_ERR_USAGE, message}; }

std::string take(char* s) {
    std::string out = s ? s : "";
    wl_string_free(s);
    return out;
}

using ConfigPtr = std::unique_ptr<wl_config, decltype(&wl_config_free)>;
using ModelPtr = std::unique_ptr<wl_model, decltype(&wl_model_free)>;
using StreamPtr = std::unique_ptr<wl_stream, decltype(&wl_stream_free)>;

// Flags that map one-to-one onto config keys.
struct KeyFlag {
    std::string key;
    std::string value;
    CLI::Option* option = nullptr;
};

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
    std::vector<std::unique_ptr<KeyFlag>> flags;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "Config file (key = value lines)");
        app->add_option("--set", overrides, "Override a config key, KEY=VALUE (repeatable)");
    }

    void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
        flags.push_back(std::make_unique<KeyFlag>());
        auto* f = flags.back().get();
        f->key = key;
        f->option = app->add_option(name, f->value, help);
    }

    // Defaults, then the config file, then --set, then dedicated flags.
    ConfigPtr resolve() const {
        wl_config* raw = nullptr;
        check(wl_config_new(&raw));
        ConfigPtr cfg(raw, wl_config_free);
        std::string file = config_file;
        if (file.empty()) {
            if (const char* env = std::getenv("WORDLOC_CONFIG"); env && *env) file = env;
        }
        if (!file.empty()) check(wl_config_load(cfg.get(), file.c_str()));
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) usage("--set expects KEY=VALUE, got '" + o + "'");
            check(wl_config_set(cfg.get(), o.substr(0, eq).c_str(), o.substr(eq + 1).c_str()));
        }
        for (const auto& f : flags) {
            if (f->option->count() > 0) check(wl_config_set(cfg.get(), f->key.c_str(), f->value.c_str()));
        }
        return cfg;
    }
};

std::string get(const wl_config* cfg, const char* key) {
    char* v = nullptr;
    check(wl_config_get(cfg, key, &v));
    return take(v);
}

double get_number(const wl_config* cfg, const char* key) { return std::strtod(get(cfg, key).c_str(), nullptr); }

// Writes text to path (creating its directory) and drops the resolved config
// next to it.
void write_output(const wl_config* cfg, const std::string& path, const std::string& text) {
    fs::path p(path);
    const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    check(wl_config_write(cfg, dir.string().c_str()));
    std::ofstream out(p, std::ios::binary);
    out << text;
    out.close();
    if (!out) usage("cannot write " + path);
}

int run_generate(const Common& common, const std::string& out_dir) {
    auto cfg = common.resolve();
    char* summary = nullptr;
    check(wl_generate(cfg.get(), out_dir.c_str(), &summary));
    std::cout << take(summary) << '\n';
    return 0;
}

int run_train(const Common& common, const std::string& corpus, const std::string& out_dir,
              const std::string& resume, bool quiet) {
    auto cfg = common.resolve();
    auto on_epoch = [](const char* row, void* user) {
        if (!*static_cast<bool*>(user)) std::cerr << row << std::endl;
    };
    bool q = quiet;
    if (!quiet) std::cerr << "epoch,lr,L_pos,L_neg,L_o,L_l,L_s,total" << std::endl;
    char* summary = nullptr;
    check(wl_train(cfg.get(), corpus.c_str(), out_dir.c_str(), resume.empty() ? nullptr : resume.c_str(), on_epoch,
                   &q, &summary));
    std::cout << take(summary) << '\n';
    return 0;
}

void read_lines_file(const fs::path& path, std::vector<std::string>& lines) {
    std::ifstream in(path);
    if (!in) throw Failure{WL_ERR_DOMAIN, "cannot open " + path.string()};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
}

struct EventBuffer {
    wl_event* data = nullptr;
    size_t n = 0;
    ~EventBuffer() { wl_events_free(data); }
};

std::string infer_one(const wl_model* model, const std::string& utterance, const std::string& path, double lambda,
                      double nms, bool stream, long long chunk) {
    double* samples = nullptr;
    size_t count = 0;
    check(wl_audio_load(path.c_str(), wl_model_sample_rate(model), &samples, &count, nullptr));
    std::unique_ptr<double, decltype(&wl_samples_free)> hold(samples, wl_samples_free);
    std::string text;
    if (count < wl_model_receptive_field(model)) {
        std::cerr << "wordloc: warning: " << utterance << " has " << count
                  << " samples, fewer than the receptive field; no events\n";
        return text;
    }
    auto emit = [&](const EventBuffer& b) {
        char* t = nullptr;
        check(wl_format_events(model, utterance.c_str(), b.data, b.n, 0, &t));
        text += take(t);
    };
    if (!stream) {
        EventBuffer b;
        check(wl_detect(model, samples, count, lambda, nms, &b.data, &b.n));
        emit(b);
        return text;
    }
    wl_stream* raw = nullptr;
    check(wl_stream_open(model, lambda, nms, &raw));
    StreamPtr st(raw, wl_stream_free);
    for (size_t pos = 0; pos < count; pos += static_cast<size_t>(chunk)) {
        const size_t len = std::min(static_cast<size_t>(chunk), count - pos);
        EventBuffer b;
        check(wl_stream_push(st.get(), samples + pos, len, &b.data, &b.n));
        emit(b);
    }
    EventBuffer b;
    check(wl_stream_finish(st.get(), &b.data, &b.n));
    emit(b);
    return text;
}

int run_infer(const Common& common, const std::string& model_path, std::vector<std::string> files,
              const std::string& corpus, const std::string& split, bool stream, long long chunk,
              const std::string& output) {
    auto cfg = common.resolve();
    const double lambda = get_number(cfg.get(), "infer.lambda");
    const double nms = get_number(cfg.get(), "infer.nms_iou");
    if (!(lambda > 0.0 && lambda < 1.0)) usage("lambda must lie in (0, 1)");
    if (!(nms > 0.0 && nms <= 1.0)) usage("NMS IoU threshold must lie in (0, 1]");
    if (stream && chunk < 0) usage("--chunk must be positive");

    wl_model* raw = nullptr;
    check(wl_model_load(model_path.c_str(), &raw));
    ModelPtr model(raw, wl_model_free);
    if (stream && chunk == 0) chunk = static_cast<long long>(wl_model_stride(model.get()));

    std::vector<std::pair<std::string, std::string>> inputs;
    for (const auto& f : files) inputs.emplace_back(fs::path(f).stem().string(), f);
    if (!corpus.empty()) {
        std::vector<std::string> ids;
        read_lines_file(fs::path(corpus) / (split + ".lst"), ids);
        for (const auto& id : ids) inputs.emplace_back(id, (fs::path(corpus) / "wav" / (id + ".wav")).string());
    }
    if (inputs.empty()) usage("no audio given: pass WAV files or --corpus");

    std::string text = "utterance_id\tword\tbegin_sample\tend_sample\tbegin_sec\tend_sec\tscore\n";
    for (const auto& [id, path] : inputs) text += infer_one(model.get(), id, path, lambda, nms, stream, chunk);
    if (output.empty()) {
        std::cout << text;
    } else {
        check(wl_config_set(cfg.get(), "path.checkpoint", model_path.c_str()));
        check(wl_config_set(cfg.get(), "path.output", output.c_str()));
        write_output(cfg.get(), output, text);
    }
    return 0;
}

int run_evaluate(const Common& common, const std::string& truth, const std::string& events,
                 const std::string& manifest, const std::string& output) {
    auto cfg = common.resolve();
    char* report = nullptr;
    char* table = nullptr;
    check(wl_evaluate(cfg.get(), truth.c_str(), events.c_str(), manifest.empty() ? nullptr : manifest.c_str(), &report,
                      &table));
    const std::string r = take(report);
    std::cout << take(table);
    if (!output.empty()) {
        check(wl_config_set(cfg.get(), "path.output", output.c_str()));
        write_output(cfg.get(), output, r + "\n");
    } else {
        std::cout << r << '\n';
    }
    return 0;
}

int run_mtwv(const Common& common, const std::string& truth, const std::string& events, const std::string& keywords,
             const std::string& manifest, double duration, const std::string& audio_dir, const std::string& output) {
    auto cfg = common.resolve();
    if (duration <= 0.0 && audio_dir.empty()) usage("give --duration or --audio-dir");
    char* report = nullptr;
    char* table = nullptr;
    check(wl_mtwv(cfg.get(), truth.c_str(), events.c_str(), keywords.c_str(),
                  manifest.empty() ? nullptr : manifest.c_str(), duration,
                  audio_dir.empty() ? nullptr : audio_dir.c_str(), &report, &table));
    const std::string r = take(report);
    std::cout << take(table);
    if (!output.empty()) {
        check(wl_config_set(cfg.get(), "path.output", output.c_str()));
        write_output(cfg.get(), output, r + "\n");
    } else {
        std::cout << r << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Word detection and localization in raw audio"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(wl_version()));

    auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
    Common gen_common;
    std::string gen_out;
    gen_common.attach(gen);
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen_common.flag(gen, "--seed", "seed", "Random seed");
    gen_common.flag(gen, "--words", "corpus.words", "Lexicon size");
    gen_common.flag(gen, "--utterances", "corpus.utterances", "Number of utterances");
    gen_common.flag(gen, "--events", "corpus.events_per_utterance", "Words per utterance");
    gen_common.flag(gen, "--snr", "corpus.snr_db", "Signal-to-noise ratio in dB (inf for clean audio)");
    gen_common.flag(gen, "--sample-rate", "corpus.sample_rate", "Sample rate in Hz");
    gen_common.flag(gen, "--min-seconds", "corpus.min_seconds", "Shortest utterance");
    gen_common.flag(gen, "--max-seconds", "corpus.max_seconds", "Longest utterance");
    gen_common.flag(gen, "--dev-fraction", "corpus.dev_fraction", "Share of utterances in the dev split");
    gen_common.flag(gen, "--test-fraction", "corpus.test_fraction", "Share of utterances in the test split");

    auto* tr = app.add_subcommand("train", "Train a model on a corpus");
    Common tr_common;
    std::string tr_corpus, tr_out, tr_resume;
    bool tr_quiet = false;
    tr_common.attach(tr);
    tr->add_option("--corpus", tr_corpus, "Corpus directory")->required();
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_option("--resume", tr_resume, "Continue from a checkpoint");
    tr->add_flag("--quiet", tr_quiet, "Do not print per-epoch losses");
    tr_common.flag(tr, "--seed", "seed", "Random seed");
    tr_common.flag(tr, "--threads", "threads", "Worker threads");
    tr_common.flag(tr, "--epochs", "train.epochs", "Number of epochs");
    tr_common.flag(tr, "--batch-size", "train.batch_size", "Utterances per minibatch");
    tr_common.flag(tr, "--lr", "train.lr", "Initial learning rate");
    tr_common.flag(tr, "--lr-final", "train.lr_final", "Learning rate at the end of training");
    tr_common.flag(tr, "--lr-schedule", "train.lr_schedule", "cosine or constant");
    tr_common.flag(tr, "--backbone", "backbone", "Backbone layers, channels:kernel:stride:dilation:activation,...");
    tr_common.flag(tr, "--max-leading-cut", "train.max_leading_cut", "Leading cut bound in samples (-1: stride)");
    tr_common.flag(tr, "--teacher-forcing", "train.teacher_forcing", "Force the true class into the mask (true/false)");

    auto* inf = app.add_subcommand("infer", "Detect words in audio");
    Common inf_common;
    std::string inf_model, inf_corpus, inf_split = "test", inf_output;
    std::vector<std::string> inf_files;
    bool inf_stream = false;
    long long inf_chunk = 0;
    inf_common.attach(inf);
    inf->add_option("--model", inf_model, "Checkpoint")->required();
    inf->add_option("audio", inf_files, "WAV files");
    inf->add_option("--corpus", inf_corpus, "Corpus directory (reads <split>.lst)");
    inf->add_option("--split", inf_split, "Corpus split")->check(CLI::IsMember({"train", "dev", "test"}));
    inf->add_flag("--stream", inf_stream, "Feed audio in chunks through the streaming detector");
    inf->add_option("--chunk", inf_chunk, "Chunk size in samples (default: model stride)");
    inf->add_option("--output", inf_output, "Event file (default: stdout)");
    inf_common.flag(inf, "--lambda", "infer.lambda", "Score threshold in (0, 1)");
    inf_common.flag(inf, "--nms", "infer.nms_iou", "NMS IoU threshold");

    auto* ev = app.add_subcommand("evaluate", "Score detections against alignments");
    Common ev_common;
    std::string ev_truth, ev_events, ev_manifest, ev_output;
    ev_common.attach(ev);
    ev->add_option("--truth", ev_truth, "Alignment file")->required();
    ev->add_option("--events", ev_events, "Event file")->required();
    ev->add_option("--manifest", ev_manifest, "Restrict to the utterances listed");
    ev->add_option("--output", ev_output, "JSON report path");
    ev_common.flag(ev, "--accuracy-iou", "eval.accuracy_iou", "IoU needed for actual accuracy");

    auto* mt = app.add_subcommand("mtwv", "Keyword search scoring: per-keyword thresholds and MTWV");
    Common mt_common;
    std::string mt_truth, mt_events, mt_keywords, mt_manifest, mt_audio, mt_output;
    double mt_duration = 0.0;
    mt_common.attach(mt);
    mt->add_option("--truth", mt_truth, "Alignment file")->required();
    mt->add_option("--events", mt_events, "Scored event file")->required();
    mt->add_option("--keywords", mt_keywords, "Keyword list, one per line")->required();
    mt->add_option("--manifest", mt_manifest, "Restrict to the utterances listed");
    mt->add_option("--duration", mt_duration, "Total audio duration in seconds");
    mt->add_option("--audio-dir", mt_audio, "Directory of <utterance>.wav files to measure the duration");
    mt->add_option("--output", mt_output, "JSON report path");
    mt_common.flag(mt, "--beta", "mtwv.beta", "False-alarm weight");
    mt_common.flag(mt, "--lambda", "infer.lambda", "Shared threshold for the reference TWV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : WL_ERR_USAGE;
    }

    try {
        if (gen->parsed()) return run_generate(gen_common, gen_out);
        if (tr->parsed()) return run_train(tr_common, tr_corpus, tr_out, tr_resume, tr_quiet);
        if (inf->parsed()) {
            return run_infer(inf_common, inf_model, inf_files, inf_corpus, inf_split, inf_stream, inf_chunk,
                             inf_output);
        }
        if (ev->parsed()) return run_evaluate(ev_common, ev_truth, ev_events, ev_manifest, ev_output);
        if (mt->parsed()) {
            return run_mtwv(mt_common, mt_truth, mt_events, mt_keywords, mt_manifest, mt_duration, mt_audio,
                            mt_output);
        }
    } catch (const Failure& f) {
        std::cerr << "wordloc: " << (f.code == WL_ERR_USAGE ? "usage error: " : "error: ") << f.message << '\n';
        return f.code;
    }
    return WL_ERR_USAGE;
}
