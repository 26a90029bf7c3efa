#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace dtn::cfg {

// Flat key-value configuration with dotted section names
// (e.g. train.alpha=15). Serialization is canonical (sorted keys), so
// parse -> serialize -> parse is a fixed point. Unknown keys are rejected
// by the consumer, naming the key and its line.
struct Config {
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;  // 1-based source line per key

    bool has(const std::string& k) const { return values.count(k) > 0; }
    const std::string& at(const std::string& k) const { return values.at(k); }
    int line(const std::string& k) const {
        auto it = lines.find(k);
        return it == lines.end() ? 0 : it->second;
    }
};

Config parse_config_text(const std::string& text);
Config load_config(const std::filesystem::path& file);
std::string serialize_config(const Config& c);

// Hex prefix of the SHA-256 of the canonical serialization.
std::string config_hash(const Config& c);

}  // namespace dtn::cfg
