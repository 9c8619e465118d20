#include "wordloc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

enum class Kind { Int, Real, Bool, Text };

struct KeySpec {
    const char* key;
    Kind kind;
    const char* fallback;
};

// Defaults resolve lazily for the backbone so it tracks the reference spec.
const std::vector<KeySpec>& table() {
    static const std::vector<KeySpec> t = {
        {"seed", Kind::Int, "7"},
        {"threads", Kind::Int, "1"},
        {"backbone", Kind::Text, ""},
        {"corpus.words", Kind::Int, "10"},
        {"corpus.utterances", Kind::Int, "200"},
        {"corpus.events_per_utterance", Kind::Int, "3"},
        {"corpus.sample_rate", Kind::Int, "2000"},
        {"corpus.min_seconds", Kind::Real, "2"},
        {"corpus.max_seconds", Kind::Real, "6"},
        {"corpus.min_word_samples", Kind::Int, "80"},
        {"corpus.max_word_samples", Kind::Int, "240"},
        {"corpus.min_gap", Kind::Int, "16"},
        {"corpus.snr_db", Kind::Real, "20"},
        {"corpus.dev_fraction", Kind::Real, "0.2"},
        {"corpus.test_fraction", Kind::Real, "0.2"},
        {"corpus.max_template_correlation", Kind::Real, "0.5"},
        {"corpus.min_sweep_separation", Kind::Real, "0.3"},
        {"train.epochs", Kind::Int, "30"},
        {"train.batch_size", Kind::Int, "4"},
        {"train.lr", Kind::Real, "0.001"},
        {"train.lr_final", Kind::Real, "0.0001"},
        {"train.lr_schedule", Kind::Text, "cosine"},
        {"train.max_leading_cut", Kind::Int, "-1"},
        {"train.teacher_forcing", Kind::Bool, "false"},
        {"label.positive", Kind::Real, "0.95"},
        {"label.negative", Kind::Real, "0.5"},
        {"infer.lambda", Kind::Real, "0.95"},
        {"infer.nms_iou", Kind::Real, "0.5"},
        {"eval.accuracy_iou", Kind::Real, "0.5"},
        {"mtwv.beta", Kind::Real, "999.9"},
        {"path.corpus", Kind::Text, ""},
        {"path.checkpoint", Kind::Text, ""},
        {"path.output", Kind::Text, ""},
    };
    return t;
}

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : table()) {
        if (key == k.key) return &k;
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        out = false;
        return true;
    }
    return false;
}

bool parse_int(const std::string& v, long long& out) {
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    return ec == std::errc() && p == end;
}

bool parse_real(const std::string& v, double& out) {
    if (v == "inf" || v == "infinity") {
        out = std::numeric_limits<double>::infinity();
        return true;
    }
    std::istringstream is(v);
    is >> out;
    return !is.fail() && is.peek() == std::char_traits<char>::eof();
}

} // namespace

RunConfig::RunConfig() {
    for (const auto& k : table()) values_[k.key] = k.fallback;
    values_["backbone"] = BackboneSpec::reference().describe();
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& k : table()) out.emplace_back(k.key);
    return out;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const KeySpec* spec = find_key(key);
    if (!spec) usage_error("unknown config key '" + key + "'");
    const std::string value = trim(raw);
    bool ok = true;
    switch (spec->kind) {
    case Kind::Int: {
        long long v;
        ok = parse_int(value, v);
        break;
    }
    case Kind::Real: {
        double v;
        ok = parse_real(value, v) && !std::isnan(v);
        break;
    }
    case Kind::Bool: {
        bool v;
        ok = parse_bool(value, v);
        break;
    }
    case Kind::Text:
        break;
    }
    if (!ok) usage_error("invalid value '" + value + "' for config key '" + key + "'");
    if (key == "backbone" && !value.empty()) {
        try {
            (void)BackboneSpec::parse(value);
        } catch (const Error& e) {
            usage_error("invalid backbone '" + value + "': " + e.what());
        }
    }
    if (key == "train.lr_schedule" && value != "cosine" && value != "constant") {
        usage_error("lr schedule must be 'cosine' or 'constant'");
    }
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) usage_error("unknown config key '" + key + "'");
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
    long long v = 0;
    if (!parse_int(get(key), v)) usage_error("config key '" + key + "' is not an integer");
    return v;
}

double RunConfig::get_double(const std::string& key) const {
    double v = 0;
    if (!parse_real(get(key), v)) usage_error("config key '" + key + "' is not a number");
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    bool v = false;
    if (!parse_bool(get(key), v)) usage_error("config key '" + key + "' is not a boolean");
    return v;
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            usage_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const Error& e) {
            usage_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) usage_error("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path.string());
}

std::string RunConfig::dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
}

void RunConfig::write_to(const std::filesystem::path& dir) const {
    const auto path = dir / "run_config.txt";
    std::ofstream out(path, std::ios::binary);
    out << dump();
    if (!out) usage_error("cannot write " + path.string());
}

CorpusConfig RunConfig::corpus() const {
    CorpusConfig c;
    c.words = static_cast<int>(get_int("corpus.words"));
    c.utterances = static_cast<int>(get_int("corpus.utterances"));
    c.events_per_utterance = static_cast<int>(get_int("corpus.events_per_utterance"));
    c.sample_rate = static_cast<int>(get_int("corpus.sample_rate"));
    c.min_seconds = get_double("corpus.min_seconds");
    c.max_seconds = get_double("corpus.max_seconds");
    c.min_word_samples = static_cast<int>(get_int("corpus.min_word_samples"));
    c.max_word_samples = static_cast<int>(get_int("corpus.max_word_samples"));
    c.min_gap = static_cast<int>(get_int("corpus.min_gap"));
    c.snr_db = get_double("corpus.snr_db");
    c.dev_fraction = get_double("corpus.dev_fraction");
    c.test_fraction = get_double("corpus.test_fraction");
    c.max_template_correlation = get_double("corpus.max_template_correlation");
    c.min_sweep_separation = get_double("corpus.min_sweep_separation");
    c.seed = static_cast<std::uint64_t>(get_int("seed"));
    return c;
}

TrainConfig RunConfig::training() const {
    TrainConfig t;
    t.epochs = static_cast<int>(get_int("train.epochs"));
    t.batch_size = static_cast<int>(get_int("train.batch_size"));
    t.lr = get_double("train.lr");
    t.lr_final = get_double("train.lr_final");
    t.schedule = get("train.lr_schedule") == "constant" ? LrSchedule::Constant : LrSchedule::Cosine;
    t.max_leading_cut = static_cast<int>(get_int("train.max_leading_cut"));
    t.teacher_forcing = get_bool("train.teacher_forcing");
    t.thresholds.positive = get_double("label.positive");
    t.thresholds.negative = get_double("label.negative");
    t.seed = static_cast<std::uint64_t>(get_int("seed"));
    t.threads = static_cast<int>(get_int("threads"));
    return t;
}

DecodeOptions RunConfig::decoding() const {
    DecodeOptions d;
    d.lambda = get_double("infer.lambda");
    d.nms_iou = get_double("infer.nms_iou");
    validate(d);
    return d;
}

BackboneSpec RunConfig::backbone() const { return BackboneSpec::parse(get("backbone")); }

} // namespace wordloc
