#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wordloc/labeling.hpp"

namespace wordloc {

// One line of an alignment file: utterance_id, word, begin_sample, end_sample.
struct AlignmentRecord {
    std::string utterance;
    std::string word;
    std::int64_t begin = 0;
    std::int64_t end = 0;

    friend bool operator==(const AlignmentRecord&, const AlignmentRecord&) = default;
};

std::vector<AlignmentRecord> read_alignment_records(const std::string& path);
void write_alignment_records(const std::string& path, std::span<const AlignmentRecord> records);

struct LoadedAlignments {
    std::map<std::string, std::vector<Event>> utterances;
    std::size_t total_records = 0;
    std::size_t dropped_records = 0; // out-of-lexicon
    std::vector<std::string> warnings;

    double drop_fraction() const noexcept {
        return total_records ? static_cast<double>(dropped_records) / static_cast<double>(total_records) : 0.0;
    }
};

// Groups records by utterance and maps words onto the lexicon; words outside
// it are dropped and counted.
LoadedAlignments load_alignments(const std::string& path, const Lexicon& lexicon);
LoadedAlignments group_alignments(std::span<const AlignmentRecord> records, const Lexicon& lexicon);

// The top_n most frequent words (ties alphabetical).
Lexicon lexicon_by_frequency(std::span<const AlignmentRecord> records, std::size_t top_n);

Lexicon read_lexicon(const std::string& path);
void write_lexicon(const std::string& path, const Lexicon& lexicon);
std::vector<std::string> read_manifest(const std::string& path);

// Deterministic parametric word: a linear chirp with raised-cosine edges.
struct WordTemplate {
    double start_hz = 0.0;
    double end_hz = 0.0;
    int min_samples = 0; // occurrence duration range
    int max_samples = 0;
};

class SyntheticWordBank {
public:
    SyntheticWordBank() = default;
    // Draws templates until every pair correlates below max_correlation and
    // differs by min_separation (fraction of Nyquist) at the start or the end
    // of the sweep.
    SyntheticWordBank(int words, int sample_rate, int min_samples, int max_samples, std::uint64_t seed,
                      double max_correlation = 0.5, double min_separation = 0.3);

    const std::vector<WordTemplate>& templates() const noexcept { return templates_; }
    int sample_rate() const noexcept { return sample_rate_; }
    std::vector<double> render(int word, int duration, double amplitude) const;
    // Largest normalized cross-correlation over all lags between two words
    // rendered at the middle of their duration ranges.
    double max_cross_correlation(int a, int b) const;

private:
    std::vector<WordTemplate> templates_;
    int sample_rate_ = 0;
};

struct CorpusConfig {
    int words = 10;
    int utterances = 200;
    int events_per_utterance = 3;
    int sample_rate = 2000;
    double min_seconds = 2.0;
    double max_seconds = 6.0;
    int min_word_samples = 80;
    int max_word_samples = 240;
    int min_gap = 16;
    double snr_db = 20.0; // infinity disables noise
    double max_template_correlation = 0.5;
    double min_sweep_separation = 0.3; // fraction of Nyquist
    double min_amplitude = 0.25;
    double max_amplitude = 0.5;
    double dev_fraction = 0.2;
    double test_fraction = 0.2;
    std::uint64_t seed = 7;
};

struct Utterance {
    std::string id;
    std::vector<double> samples; // already PCM16-quantized
    std::vector<Event> events;
};

struct SyntheticCorpus {
    Lexicon lexicon;
    SyntheticWordBank bank;
    int sample_rate = 0;
    std::vector<Utterance> utterances;
    std::vector<std::string> train, dev, test;
};

SyntheticCorpus generate_synthetic(const CorpusConfig& config);

struct CorpusSummary {
    std::size_t utterances = 0;
    std::size_t events = 0;
    double seconds = 0.0;
    std::size_t train = 0, dev = 0, test = 0;
};

// Layout: lexicon.txt, alignments.tsv, {train,dev,test}.lst, wav/<id>.wav,
// corpus.json.
CorpusSummary write_corpus(const SyntheticCorpus& corpus, const CorpusConfig& config,
                           const std::filesystem::path& out_dir);

CorpusSummary generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

struct CorpusSplit {
    Lexicon lexicon;
    int sample_rate = 0;
    std::vector<Utterance> utterances;
    std::vector<std::string> warnings;
};

// Loads one split ("train", "dev", "test") of a corpus directory.
CorpusSplit load_corpus_split(const std::filesystem::path& dir, const std::string& split);

} // namespace wordloc
