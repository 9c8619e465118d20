#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wordloc/heads.hpp"
#include "wordloc/model.hpp"

namespace wordloc {

struct Proposal {
    int word = 0;
    double begin = 0.0; // samples
    double end = 0.0;   // samples
    double score = 0.0;
    std::int64_t source_segment = 0;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

// Which head produces word hypotheses.
enum class ProposalSource {
    Classifier, // argmax of ŝ, score max(ŝ)
    Detection,  // every (t, w) with ŷ >= λ, score ŷ
};

struct DecodeOptions {
    double lambda = 0.95;
    double nms_iou = 0.5;
    ProposalSource source = ProposalSource::Classifier;
    // When false the proposal is the source window itself (no ô, l̂).
    bool use_regression = true;
};

void validate(const DecodeOptions& options);

// Decodes the proposal for one (segment, word) cell, or nothing when the
// predicted length is not positive. Lengths above 2 are clipped to 2, the
// offset to the window (|ô| <= R/2S) and the begin to >= 0.
std::optional<Proposal> decode_cell(const FrameGeometry& geometry, std::int64_t t, int word, double o_hat,
                                    double l_hat, double score);

// Proposals for rows [0, outputs.segments()); row i is segment first_segment + i.
std::vector<Proposal> propose_events(const HeadOutputs& outputs, const FrameGeometry& geometry,
                                     const DecodeOptions& options, std::int64_t first_segment = 0);

// Greedy per-word NMS. Score ties go to the earlier begin, then the lower
// word index. Output sorted by begin_order_less.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

// Total order used for emitted event lists.
bool begin_order_less(const Proposal& a, const Proposal& b) noexcept;

// Whole-utterance detection: backbone, heads, proposals, NMS.
std::vector<Proposal> detect(const Model& model, std::span<const double> signal, const DecodeOptions& options);

// Streaming detection over chunks of any size. Events are emitted once no
// later segment can produce an overlapping proposal, in the same order as
// detect() so the concatenated output is identical.
class StreamDetector {
public:
    StreamDetector(const Model& model, const DecodeOptions& options);

    std::vector<Proposal> push(std::span<const double> samples);
    std::vector<Proposal> finish();

    std::int64_t segments_processed() const noexcept { return backbone_.rows_emitted(); }
    std::int64_t samples_seen() const noexcept { return backbone_.samples_seen(); }
    // True once finish() ran on a stream shorter than one receptive field.
    bool too_short() const noexcept { return too_short_; }

private:
    std::vector<Proposal> finalize(double future_begin_bound);

    const Model* model_;
    DecodeOptions options_;
    StreamingBackbone backbone_;
    std::vector<Proposal> pending_;  // proposals not yet suppressed/kept
    std::vector<Proposal> finalized_; // kept, waiting for ordered emission
    bool too_short_ = false;
    bool finished_ = false;
};

// Line-delimited event records: header line then one tab-separated row per
// event (utterance_id, word, begin_sample, end_sample, begin_sec, end_sec, score).
struct EventRecord {
    std::string utterance;
    std::string word;
    std::int64_t begin = 0;
    std::int64_t end = 0;
    double score = 0.0;
};

EventRecord to_record(const std::string& utterance, const Lexicon& lexicon, const Proposal& p);
void write_event_header(std::ostream& os);
void write_event_record(std::ostream& os, const EventRecord& record, int sample_rate);
std::vector<EventRecord> read_event_records(std::istream& is);
std::vector<EventRecord> read_event_records(const std::string& path);

} // namespace wordloc
