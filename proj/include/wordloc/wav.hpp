#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wordloc {

struct AudioData {
    std::vector<double> samples; // normalized to [-1, 1)
    int sample_rate = 0;
};

// Reads a 16-bit PCM mono RIFF/WAVE file. Samples are int16 / 32768. When
// expected_rate is set, a different rate is an error.
AudioData load_audio(const std::string& path, std::optional<int> expected_rate = std::nullopt);
AudioData decode_wav(std::span<const std::uint8_t> bytes, std::optional<int> expected_rate = std::nullopt);

// Quantizes to int16 (round to nearest, saturating) and writes PCM16 mono.
void save_wav(const std::string& path, std::span<const double> samples, int sample_rate);
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate);

// Value the sample takes after a PCM16 roundtrip.
double quantize_pcm16(double x) noexcept;

} // namespace wordloc
