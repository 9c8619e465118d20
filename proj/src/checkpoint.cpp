#include "wordloc/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

constexpr const char* kMagic = "wordloc-checkpoint";

void put_f32(std::vector<std::uint8_t>& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f32(const std::uint8_t* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const TrainingState* state) {
    using nlohmann::json;
    json header;
    header["format_version"] = kCheckpointVersion;
    header["backbone"] = model.spec.describe();
    header["input_channels"] = model.spec.input_channels();
    header["lexicon"] = model.lexicon.words();
    header["geometry"] = {{"receptive_field", model.spec.receptive_field()}, {"stride", model.spec.stride()}};
    header["sample_rate"] = model.sample_rate;
    header["feature_dim"] = model.spec.feature_dim();

    std::vector<std::uint8_t> payload;
    json blocks = json::array();
    std::size_t total = 0;
    for_each_block(model.params, [&](const std::string& name, std::span<const double> b) {
        blocks.push_back({{"name", name}, {"count", b.size()}});
        for (double v : b) put_f32(payload, v);
        total += b.size();
    });
    if (state) {
        if (state->adam_m.size() != total || state->adam_v.size() != total) {
            fail("optimizer state does not match parameter count");
        }
        blocks.push_back({{"name", "adam.m"}, {"count", total}});
        for (double v : state->adam_m) put_f32(payload, v);
        blocks.push_back({{"name", "adam.v"}, {"count", total}});
        for (double v : state->adam_v) put_f32(payload, v);
        header["training"] = {{"epochs_completed", state->epochs_completed},
                              {"learning_rate", state->learning_rate},
                              {"adam_step", state->adam_step},
                              {"config", state->config}};
    }
    header["blocks"] = blocks;

    const std::string head = std::string(kMagic) + " " + std::to_string(kCheckpointVersion) + "\n" + header.dump() + "\n";
    std::vector<std::uint8_t> out(head.begin(), head.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    using nlohmann::json;
    auto line_end = [&](std::size_t from) {
        for (std::size_t i = from; i < bytes.size(); ++i) {
            if (bytes[i] == '\n') return i;
        }
        fail("truncated checkpoint header");
    };
    const std::size_t first = line_end(0);
    const std::string magic(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(first));
    const std::string expected = std::string(kMagic) + " " + std::to_string(kCheckpointVersion);
    if (magic != expected) fail("not a wordloc checkpoint (or unsupported version): '" + magic + "'");
    const std::size_t second = line_end(first + 1);
    const json header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(first + 1),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(second), nullptr, false);
    if (header.is_discarded()) fail("checkpoint header is not valid JSON");

    Checkpoint ck;
    try {
        ck.model.spec = BackboneSpec::parse(header.at("backbone").get<std::string>());
        ck.model.lexicon = Lexicon(header.at("lexicon").get<std::vector<std::string>>());
        ck.model.sample_rate = header.at("sample_rate").get<int>();
        const auto& g = header.at("geometry");
        if (g.at("receptive_field").get<std::int64_t>() != ck.model.spec.receptive_field() ||
            g.at("stride").get<std::int64_t>() != ck.model.spec.stride()) {
            fail("checkpoint geometry does not match its backbone");
        }
    } catch (const json::exception& e) {
        fail(std::string("bad checkpoint header: ") + e.what());
    }
    ck.model.params.backbone = zero_backbone_params(ck.model.spec);
    ck.model.params.heads = HeadParams(ck.model.lexicon.size(), ck.model.spec.feature_dim());

    const std::uint8_t* cursor = bytes.data() + second + 1;
    const std::uint8_t* end = bytes.data() + bytes.size();
    const auto& table = header.at("blocks");
    std::size_t index = 0;
    auto read_block = [&](const std::string& name, std::span<double> dst) {
        if (index >= table.size()) fail("checkpoint is missing block " + name);
        const auto& entry = table[index++];
        if (entry.at("name").get<std::string>() != name || entry.at("count").get<std::size_t>() != dst.size()) {
            fail("checkpoint block mismatch at " + name);
        }
        if (static_cast<std::size_t>(end - cursor) < 4 * dst.size()) fail("truncated checkpoint payload");
        for (auto& v : dst) {
            v = get_f32(cursor);
            cursor += 4;
        }
    };
    for_each_block(ck.model.params, read_block);

    if (header.contains("training")) {
        const auto& t = header["training"];
        TrainingState st;
        st.epochs_completed = t.at("epochs_completed").get<int>();
        st.learning_rate = t.at("learning_rate").get<double>();
        st.adam_step = t.at("adam_step").get<std::uint64_t>();
        st.config = t.at("config").get<std::map<std::string, std::string>>();
        const std::size_t total = parameter_count(ck.model.params);
        st.adam_m.resize(total);
        st.adam_v.resize(total);
        read_block("adam.m", st.adam_m);
        read_block("adam.v", st.adam_v);
        ck.training = std::move(st);
    }
    if (cursor != end) fail("trailing bytes after checkpoint payload");
    return ck;
}

void save_checkpoint(const std::string& path, const Model& model, const TrainingState* state) {
    const auto bytes = serialize_checkpoint(model, state);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) usage_error("cannot write checkpoint '" + path + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) usage_error("failed writing checkpoint '" + path + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) usage_error("cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

} // namespace wordloc
