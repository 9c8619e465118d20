#include "wordloc/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::int16_t to_pcm16(double x) noexcept {
    const double v = std::nearbyint(x * 32768.0);
    return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

} // namespace

double quantize_pcm16(double x) noexcept { return static_cast<double>(to_pcm16(x)) / 32768.0; }

AudioData decode_wav(std::span<const std::uint8_t> bytes, std::optional<int> expected_rate) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        fail("not a RIFF/WAVE file");
    }
    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = read_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) fail("truncated WAV chunk");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) fail("WAV fmt chunk too small");
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            rate = read_u32(bytes.data() + body + 4);
            bits = read_u16(bytes.data() + body + 14);
            // WAVE_FORMAT_EXTENSIBLE carries the real format in the sub-format GUID.
            if (format == 0xFFFE && size >= 26) format = read_u16(bytes.data() + body + 24);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) fail("WAV data chunk before fmt chunk");
            if (channels != 1) fail("mono required (file has " + std::to_string(channels) + " channels)");
            if (format != 1 || bits != 16) fail("only 16-bit PCM WAV is supported");
            if (expected_rate && static_cast<int>(rate) != *expected_rate) {
                fail("unexpected sample rate " + std::to_string(rate) + " (expected " +
                     std::to_string(*expected_rate) + ")");
            }
            AudioData audio;
            audio.sample_rate = static_cast<int>(rate);
            audio.samples.resize(size / 2);
            for (std::size_t i = 0; i < audio.samples.size(); ++i) {
                const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
                audio.samples[i] = static_cast<double>(raw) / 32768.0;
            }
            return audio;
        }
        pos = body + size + (size & 1u);
    }
    fail("WAV file has no data chunk");
}

AudioData load_audio(const std::string& path, std::optional<int> expected_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open audio file '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes, expected_rate);
    } catch (const Error& e) {
        fail(path + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate) {
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_bytes);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    put_tag(out, "data");
    put_u32(out, data_bytes);
    for (double x : samples) put_u16(out, static_cast<std::uint16_t>(to_pcm16(x)));
    return out;
}

void save_wav(const std::string& path, std::span<const double> samples, int sample_rate) {
    const auto bytes = encode_wav(samples, sample_rate);
    std::ofstream out(path, std::ios::binary);
    if (!out) usage_error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) usage_error("failed writing '" + path + "'");
}

} // namespace wordloc
