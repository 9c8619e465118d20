// Drives the wordloc executable end to end.
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "doctest.h"
#include "support.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run_cli(const testing::TempDir& dir, const std::string& args) {
    const auto out = dir.path() / "stdout.txt";
    const auto err = dir.path() / "stderr.txt";
    const std::string cmd = std::string("env -u WORDLOC_CONFIG ") + WORDLOC_CLI_PATH + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// Tiny corpus and backbone so training finishes in seconds.
const char* kSmall =
    "--words 3 --utterances 10 --min-seconds 0.6 --max-seconds 1.0 --events 2 --seed 5";
const char* kTinyTrain =
    "--backbone 8:9:4:1:relu,8:5:2:2:relu,8:3:1:4:relu,8:1:1:1:identity --batch-size 2 --seed 5 --quiet";

} // namespace

TEST_CASE("cli: help and argument errors") {
    testing::TempDir dir("cli-args");
    CHECK(run_cli(dir, "--help").code == 0);
    CHECK(run_cli(dir, "").code == 2);
    CHECK(run_cli(dir, "frobnicate").code == 2);
    CHECK(run_cli(dir, "generate").code == 2); // --out missing
    CHECK(run_cli(dir, "generate --out x --words two").code == 2);
    const auto bad_key = run_cli(dir, "generate --out " + dir.str("c") + " --set corpus.nope=1");
    CHECK(bad_key.code == 2);
    CHECK(bad_key.err.find("usage error") != std::string::npos);
    CHECK(run_cli(dir, "evaluate --truth /nonexistent --events /nonexistent").code == 1);
}

TEST_CASE("cli: generate is reproducible and rejects unwritable outputs") {
    testing::TempDir dir("cli-gen");
    REQUIRE(run_cli(dir, "generate --out " + dir.str("a") + " " + kSmall).code == 0);
    REQUIRE(run_cli(dir, "generate --out " + dir.str("b") + " " + kSmall).code == 0);
    for (const char* f : {"alignments.tsv", "lexicon.txt", "train.lst", "corpus.json", "wav/utt00003.wav"})
        CHECK(slurp(dir.path() / "a" / f) == slurp(dir.path() / "b" / f));
    const auto summary = nlohmann::json::parse(run_cli(dir, "generate --out " + dir.str("c") + " " + kSmall).out);
    CHECK(summary["events"] == 20);

    std::ofstream(dir.str("blocker")) << "x";
    const auto r = run_cli(dir, "generate --out " + dir.str("blocker/corpus") + " " + kSmall);
    CHECK(r.code == 2);
    CHECK(run_cli(dir, "generate --out " + dir.str("d") + " --events 40 --max-seconds 2").code == 1);
}

TEST_CASE("cli: train, infer, evaluate, mtwv") {
    testing::TempDir dir("cli-pipeline");
    const auto corpus = dir.str("corpus");
    REQUIRE(run_cli(dir, "generate --out " + corpus + " " + kSmall).code == 0);

    const auto run = dir.str("run");
    const auto tr = run_cli(dir, "train --corpus " + corpus + " --out " + run + " --epochs 2 " + kTinyTrain +
                                     " --lr-schedule cosine --lr 0.001 --lr-final 0.0001");
    REQUIRE(tr.code == 0);
    const auto cfg = slurp(fs::path(run) / "run_config.txt");
    CHECK(cfg.find("train.lr = 0.001") != std::string::npos);
    CHECK(cfg.find("train.lr_final = 0.0001") != std::string::npos);
    CHECK(cfg.find("train.lr_schedule = cosine") != std::string::npos);
    const auto log = slurp(fs::path(run) / "train_log.csv");
    CHECK(log.rfind("epoch,lr,L_pos,L_neg,L_o,L_l,L_s,total\n0,0.001,", 0) == 0);

    // Resume equals an uninterrupted run.
    const auto one = dir.str("one");
    REQUIRE(run_cli(dir, "train --corpus " + corpus + " --out " + one + " --epochs 1 " + kTinyTrain +
                             " --lr-schedule cosine --lr 0.001 --lr-final 0.0001")
                .code == 0);
    CHECK(run_cli(dir, "train --corpus " + corpus + " --out " + dir.str("mismatch") + " --epochs 2 --resume " + one +
                           "/checkpoint.wlc " + kTinyTrain + " --lr 0.002")
              .code == 1);
    const auto resumed = dir.str("resumed");
    REQUIRE(run_cli(dir, "train --corpus " + corpus + " --out " + resumed + " --epochs 2 --resume " + one +
                             "/checkpoint.wlc " + kTinyTrain + " --lr-schedule cosine --lr 0.001 --lr-final 0.0001")
                .code == 0);
    CHECK(slurp(fs::path(resumed) / "checkpoint.wlc") == slurp(fs::path(run) / "checkpoint.wlc"));
    CHECK(slurp(fs::path(resumed) / "train_log.csv") == log);

    const auto model = run + "/checkpoint.wlc";
    const auto whole = run_cli(dir, "infer --model " + model + " --corpus " + corpus + " --lambda 0.3");
    REQUIRE(whole.code == 0);
    CHECK(whole.out.rfind("utterance_id\tword\tbegin_sample", 0) == 0);
    const auto streamed =
        run_cli(dir, "infer --model " + model + " --corpus " + corpus + " --lambda 0.3 --stream --chunk 160");
    REQUIRE(streamed.code == 0);
    CHECK(streamed.out == whole.out);
    CHECK(run_cli(dir, "infer --model " + model + " --corpus " + corpus + " --lambda 1.1").code == 2);
    CHECK(run_cli(dir, "infer --model " + dir.str("nothing.wlc") + " --corpus " + corpus).code == 1);

    const auto events = dir.str("events/test.tsv");
    REQUIRE(run_cli(dir, "infer --model " + model + " --corpus " + corpus + " --lambda 0.3 --output " + events).code ==
            0);
    CHECK(slurp(events) == whole.out);
    CHECK(fs::exists(dir.path() / "events" / "run_config.txt"));

    // Ground truth rewritten as events scores perfectly.
    std::ifstream align(corpus + "/alignments.tsv");
    std::string line, perfect = "utterance_id\tword\tbegin_sample\tend_sample\tbegin_sec\tend_sec\tscore\n";
    std::getline(align, line);
    while (std::getline(align, line)) {
        std::istringstream ls(line);
        std::string u, w, b, e;
        ls >> u >> w >> b >> e;
        perfect += u + "\t" + w + "\t" + b + "\t" + e + "\t0\t0\t0.9\n";
    }
    std::ofstream(dir.str("perfect.tsv")) << perfect;
    const auto ev = run_cli(dir, "evaluate --truth " + corpus + "/alignments.tsv --events " + dir.str("perfect.tsv") +
                                     " --output " + dir.str("report.json"));
    REQUIRE(ev.code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir.path() / "report.json"));
    CHECK(rep["precision"] == 1.0);
    CHECK(rep["recall"] == 1.0);
    CHECK(rep["f1"] == 1.0);
    CHECK(rep["actual_accuracy"] == 1.0);

    const auto mt = run_cli(dir, "mtwv --truth " + corpus + "/alignments.tsv --events " + dir.str("perfect.tsv") +
                                     " --keywords " + corpus + "/lexicon.txt --audio-dir " + corpus + "/wav");
    REQUIRE(mt.code == 0);
    CHECK(mt.out.find("MTWV 1.000000") != std::string::npos);
}

TEST_CASE("cli: evaluation fixture with one hit, one false alarm and one miss") {
    testing::TempDir dir("cli-eval");
    std::ofstream(dir.str("truth.tsv")) << "utterance_id\tword\tbegin_sample\tend_sample\n"
                                           "u1\tyes\t0\t100\nu1\tno\t200\t300\n";
    std::ofstream(dir.str("events.tsv")) << "utterance_id\tword\tbegin_sample\tend_sample\tbegin_sec\tend_sec\tscore\n"
                                            "u1\tyes\t10\t90\t0\t0\t0.9\nu1\tyes\t210\t290\t0\t0\t0.8\n";
    const auto r = run_cli(dir, "evaluate --truth " + dir.str("truth.tsv") + " --events " + dir.str("events.tsv"));
    REQUIRE(r.code == 0);
    const auto json_start = r.out.find('{');
    REQUIRE(json_start != std::string::npos);
    const auto rep = nlohmann::json::parse(r.out.substr(json_start));
    CHECK(rep["precision"] == 0.5);
    CHECK(rep["recall"] == 0.5);
    CHECK(rep["f1"] == 0.5);
    CHECK(r.out.find("ALL") != std::string::npos);
}

TEST_CASE("cli: twenty-keyword mtwv table") {
    testing::TempDir dir("cli-mtwv");
    std::ofstream truth(dir.str("truth.tsv"));
    std::ofstream events(dir.str("events.tsv"));
    std::ofstream kw(dir.str("keywords.txt"));
    truth << "utterance_id\tword\tbegin_sample\tend_sample\n";
    events << "utterance_id\tword\tbegin_sample\tend_sample\tbegin_sec\tend_sec\tscore\n";
    for (int k = 0; k < 20; ++k) {
        const std::string w = "kw" + std::to_string(k);
        kw << w << '\n';
        for (int i = 0; i < 3; ++i) {
            const int b = 1000 * i + 10 * k;
            truth << "u" << i << '\t' << w << '\t' << b << '\t' << b + 50 << '\n';
            if ((i + k) % 3) events << "u" << i << '\t' << w << '\t' << b + 5 << '\t' << b + 55 << "\t0\t0\t0."
                                    << 5 + (k % 4) << '\n';
        }
        events << "u0\t" << w << "\t5000\t5050\t0\t0\t0.3\n";
    }
    truth.close();
    events.close();
    kw.close();
    const auto r = run_cli(dir, "mtwv --truth " + dir.str("truth.tsv") + " --events " + dir.str("events.tsv") +
                                    " --keywords " + dir.str("keywords.txt") + " --duration 3600");
    REQUIRE(r.code == 0);
    for (int k = 0; k < 20; ++k) CHECK(r.out.find("kw" + std::to_string(k) + " ") != std::string::npos);
    CHECK(r.out.find("MTWV ") != std::string::npos);
    const auto rep = nlohmann::json::parse(r.out.substr(r.out.find('{')));
    CHECK(rep["keywords"].size() == 20);
    // Every keyword hits 2 of 3 occurrences at its optimum.
    CHECK(rep["mtwv"].get<double>() == doctest::Approx(1.0 - 1.0 / 3.0));
    CHECK(run_cli(dir, "mtwv --truth " + dir.str("truth.tsv") + " --events " + dir.str("events.tsv") +
                           " --keywords " + dir.str("keywords.txt"))
              .code == 2);
}

TEST_CASE("cli: config file and environment default") {
    testing::TempDir dir("cli-conf");
    std::ofstream(dir.str("run.conf")) << "corpus.words = 3\ncorpus.utterances = 4\ncorpus.min_seconds = 0.6\n"
                                          "corpus.max_seconds = 1.0\ncorpus.events_per_utterance = 2\n";
    const auto r = run_cli(dir, "generate --out " + dir.str("c") + " --config " + dir.str("run.conf") +
                                    " --set corpus.utterances=6");
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["utterances"] == 6);
    const std::string env_cmd = std::string("WORDLOC_CONFIG=") + dir.str("run.conf") + " " + WORDLOC_CLI_PATH +
                                " generate --out " + dir.str("e") + " > /dev/null 2>&1";
    CHECK(std::system(env_cmd.c_str()) == 0);
    CHECK(slurp(dir.path() / "e" / "run_config.txt").find("corpus.utterances = 4") != std::string::npos);
    CHECK(run_cli(dir, "generate --out " + dir.str("f") + " --config " + dir.str("missing.conf")).code == 2);
}
