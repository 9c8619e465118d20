#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wordloc/backbone.hpp"
#include "wordloc/corpus.hpp"
#include "wordloc/inference.hpp"
#include "wordloc/trainer.hpp"

namespace wordloc {

// Environment variable naming a default config file.
inline constexpr const char* kConfigEnvVar = "WORDLOC_CONFIG";

// Flat `key = value` settings. Every key is known up front with a default;
// unknown keys and malformed values are usage errors. Later sets override
// earlier ones, so load the file first and apply command-line flags after.
class RunConfig {
public:
    RunConfig();

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const;

    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    void load_file(const std::filesystem::path& path);
    // Parses `key = value` lines; '#' starts a comment.
    void load_text(const std::string& text, const std::string& origin = "config");

    std::string dump() const;
    // Writes run_config.txt into dir.
    void write_to(const std::filesystem::path& dir) const;

    static std::vector<std::string> keys();

    CorpusConfig corpus() const;
    TrainConfig training() const;
    DecodeOptions decoding() const;
    BackboneSpec backbone() const;

private:
    std::map<std::string, std::string> values_;
};

} // namespace wordloc
