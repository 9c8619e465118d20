#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wordloc/geometry.hpp"
#include "wordloc/labeling.hpp"
#include "wordloc/tensor.hpp"

namespace testing {

// Small generator helpers for property tests.
struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
    }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

    wordloc::FrameGeometry geometry(std::int64_t max_stride = 64, std::int64_t max_ratio = 20) {
        const auto s = integer(1, max_stride);
        return {s * integer(1, max_ratio) + integer(0, s - 1), s};
    }

    wordloc::Matrix matrix(std::size_t r, std::size_t c, double scale = 1.0) {
        wordloc::Matrix m(r, c);
        for (auto& v : m.data) v = real(-scale, scale);
        return m;
    }

    std::vector<double> signal(std::size_t n, double scale = 1.0) {
        std::vector<double> x(n);
        for (auto& v : x) v = real(-scale, scale);
        return x;
    }

    // Events inside [0, T) for words in [0, classes).
    std::vector<wordloc::Event> events(int classes, std::int64_t T, int count, std::int64_t max_len) {
        std::vector<wordloc::Event> out;
        for (int i = 0; i < count; ++i) {
            const auto len = integer(1, std::min(max_len, T));
            const auto b = integer(0, T - len);
            out.push_back({static_cast<int>(integer(0, classes - 1)), wordloc::Interval(b, b + len)});
        }
        return out;
    }
};

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("wordloc-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const { return (child.empty() ? path_ : path_ / child).string(); }

private:
    std::filesystem::path path_;
};

} // namespace testing
