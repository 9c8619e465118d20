#include "wordloc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

constexpr double kMaxLength = 2.0;

bool score_order_less(const Proposal& a, const Proposal& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.word != b.word) return a.word < b.word;
    if (a.end != b.end) return a.end < b.end;
    return a.source_segment < b.source_segment;
}

} // namespace

void validate(const DecodeOptions& options) {
    if (!(options.lambda > 0.0 && options.lambda < 1.0)) usage_error("lambda must lie in (0, 1)");
    if (!(options.nms_iou >= 0.0 && options.nms_iou < 1.0)) usage_error("NMS IoU threshold must lie in [0, 1)");
}

bool begin_order_less(const Proposal& a, const Proposal& b) noexcept {
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.word != b.word) return a.word < b.word;
    if (a.end != b.end) return a.end < b.end;
    if (a.score != b.score) return a.score > b.score;
    return a.source_segment < b.source_segment;
}

std::optional<Proposal> decode_cell(const FrameGeometry& geometry, std::int64_t t, int word, double o_hat,
                                    double l_hat, double score) {
    if (!(l_hat > 0.0)) return std::nullopt;
    const double half_window = static_cast<double>(geometry.receptive_field()) / (2.0 * geometry.stride());
    const double length = std::min(l_hat, kMaxLength);
    const double offset = std::clamp(o_hat, -half_window, half_window);
    const auto span = decode_offset_length(geometry, t, offset, length);
    const double begin = std::max(0.0, span.begin);
    if (!(span.end > begin)) return std::nullopt;
    return Proposal{word, begin, span.end, score, t};
}

std::vector<Proposal> propose_events(const HeadOutputs& outputs, const FrameGeometry& geometry,
                                     const DecodeOptions& options, std::int64_t first_segment) {
    std::vector<Proposal> out;
    const int c = outputs.classes();
    for (std::size_t row = 0; row < outputs.segments(); ++row) {
        const std::int64_t t = first_segment + static_cast<std::int64_t>(row);
        auto emit = [&](int w, double score) {
            std::optional<Proposal> p;
            if (options.use_regression) {
                p = decode_cell(geometry, t, w, outputs.o_hat(row, w), outputs.l_hat(row, w), score);
            } else {
                const auto win = geometry.segment_interval(t);
                p = Proposal{w, static_cast<double>(win.begin()), static_cast<double>(win.end()), score, t};
            }
            if (p) out.push_back(*p);
        };
        if (options.source == ProposalSource::Classifier) {
            const auto s = outputs.s_hat.row(row);
            const auto best = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
            if (best == c || s[best] < options.lambda) continue;
            emit(best, s[best]);
        } else {
            for (int w = 0; w < c; ++w) {
                const double y = outputs.y_hat(row, w);
                if (y >= options.lambda) emit(w, y);
            }
        }
    }
    return out;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
    std::sort(proposals.begin(), proposals.end(), score_order_less);
    std::vector<Proposal> kept;
    for (const auto& p : proposals) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.word == p.word && interval_iou(k.begin, k.end, p.begin, p.end) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(p);
    }
    std::sort(kept.begin(), kept.end(), begin_order_less);
    return kept;
}

std::vector<Proposal> detect(const Model& model, std::span<const double> signal, const DecodeOptions& options) {
    validate(options);
    const auto outputs = model_forward(model.spec, model.params, signal);
    return nms(propose_events(outputs, model.geometry(), options), options.nms_iou);
}

StreamDetector::StreamDetector(const Model& model, const DecodeOptions& options)
    : model_(&model), options_(options), backbone_(model.spec, model.params.backbone) {
    validate(options);
}

std::vector<Proposal> StreamDetector::push(std::span<const double> samples) {
    if (finished_) fail("stream already finished");
    const std::int64_t first = backbone_.rows_emitted();
    const Matrix z = backbone_.push(samples);
    if (z.rows == 0) return {};
    const auto outputs = forward_heads(z, model_->params.heads);
    const auto fresh = propose_events(outputs, model_->geometry(), options_, first);
    pending_.insert(pending_.end(), fresh.begin(), fresh.end());

    // A later segment t' >= next has its decoded center inside its window and
    // a length of at most 2R, so its begin is at least t'S - R.
    const auto g = model_->geometry();
    const double bound = static_cast<double>(backbone_.rows_emitted() * g.stride() - g.receptive_field());
    return finalize(bound);
}

std::vector<Proposal> StreamDetector::finish() {
    if (finished_) return {};
    finished_ = true;
    if (backbone_.rows_emitted() == 0) too_short_ = true;
    return finalize(std::numeric_limits<double>::infinity());
}

std::vector<Proposal> StreamDetector::finalize(double future_begin_bound) {
    // Greedy NMS only interacts through same-word overlaps, so any group of
    // same-word proposals chained by overlap can be resolved on its own once
    // no future proposal can reach it.
    std::sort(pending_.begin(), pending_.end(), [](const Proposal& a, const Proposal& b) {
        if (a.word != b.word) return a.word < b.word;
        return begin_order_less(a, b);
    });
    std::vector<Proposal> still_pending;
    double open_begin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pending_.size();) {
        std::size_t j = i + 1;
        double group_end = pending_[i].end;
        while (j < pending_.size() && pending_[j].word == pending_[i].word && pending_[j].begin < group_end) {
            group_end = std::max(group_end, pending_[j].end);
            ++j;
        }
        if (group_end <= future_begin_bound) {
            std::vector<Proposal> group(pending_.begin() + static_cast<std::ptrdiff_t>(i),
                                        pending_.begin() + static_cast<std::ptrdiff_t>(j));
            auto kept = nms(std::move(group), options_.nms_iou);
            finalized_.insert(finalized_.end(), kept.begin(), kept.end());
        } else {
            still_pending.insert(still_pending.end(), pending_.begin() + static_cast<std::ptrdiff_t>(i),
                                 pending_.begin() + static_cast<std::ptrdiff_t>(j));
            open_begin = std::min(open_begin, pending_[i].begin);
        }
        i = j;
    }
    pending_ = std::move(still_pending);

    // Emit finalized events that sort before anything still undecided.
    const double horizon = std::min(open_begin, future_begin_bound);
    std::sort(finalized_.begin(), finalized_.end(), begin_order_less);
    std::vector<Proposal> emit;
    std::size_t k = 0;
    while (k < finalized_.size() && (finished_ || finalized_[k].begin < horizon)) emit.push_back(finalized_[k++]);
    finalized_.erase(finalized_.begin(), finalized_.begin() + static_cast<std::ptrdiff_t>(k));
    return emit;
}

EventRecord to_record(const std::string& utterance, const Lexicon& lexicon, const Proposal& p) {
    EventRecord r;
    r.utterance = utterance;
    r.word = lexicon.word(p.word);
    r.begin = std::llround(p.begin);
    r.end = std::max(r.begin + 1, static_cast<std::int64_t>(std::llround(p.end)));
    r.score = p.score;
    return r;
}

void write_event_header(std::ostream& os) {
    os << "utterance_id\tword\tbegin_sample\tend_sample\tbegin_sec\tend_sec\tscore\n";
}

void write_event_record(std::ostream& os, const EventRecord& r, int sample_rate) {
    const double sr = static_cast<double>(sample_rate);
    std::ostringstream line;
    line << r.utterance << '\t' << r.word << '\t' << r.begin << '\t' << r.end << '\t' << std::fixed
         << std::setprecision(6) << static_cast<double>(r.begin) / sr << '\t' << static_cast<double>(r.end) / sr
         << '\t' << std::setprecision(9) << r.score << '\n';
    os << line.str();
}

std::vector<EventRecord> read_event_records(std::istream& is) {
    std::vector<EventRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("utterance_id", 0) == 0) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) f.push_back(field);
        if (f.size() != 7) fail("event records line " + std::to_string(lineno) + ": expected 7 fields");
        EventRecord r;
        r.utterance = f[0];
        r.word = f[1];
        try {
            std::size_t pos = 0;
            r.begin = std::stoll(f[2], &pos);
            if (pos != f[2].size()) throw std::invalid_argument("trailing");
            r.end = std::stoll(f[3], &pos);
            if (pos != f[3].size()) throw std::invalid_argument("trailing");
            r.score = std::stod(f[6]);
        } catch (const std::logic_error&) {
            fail("event records line " + std::to_string(lineno) + ": malformed number");
        }
        if (r.begin >= r.end) fail("event records line " + std::to_string(lineno) + ": begin >= end");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<EventRecord> read_event_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open event file '" + path + "'");
    return read_event_records(in);
}

} // namespace wordloc
