#include "dtn/config.hpp"

#include <fstream>
#include <sstream>

#include "dtn/data.hpp"
#include "dtn/errors.hpp"

namespace dtn::cfg {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config parse_config_text(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        if (c.values.count(key))
            throw UsageError("config line " + std::to_string(lineno) + ": duplicate key '" +
                             key + "'");
        c.values[key] = value;
        c.lines[key] = lineno;
    }
    return c;
}

Config load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot open config file " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string serialize_config(const Config& c) {
    std::ostringstream out;
    for (const auto& [k, v] : c.values) out << k << "=" << v << "\n";
    return out.str();
}

std::string config_hash(const Config& c) {
    const std::string s = serialize_config(c);
    return data::sha256_hex(reinterpret_cast<const uint8_t*>(s.data()), s.size()).substr(0, 12);
}

}  // namespace dtn::cfg
