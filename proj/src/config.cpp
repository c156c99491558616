#include "picepr/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "picepr/http_transport.hpp"
#include "picepr/mock.hpp"
#include "picepr/util.hpp"

namespace picepr {

namespace {

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (c == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

std::string parse_value(const std::string& raw, const std::string& origin, int line_no) {
    std::string v = trim(raw);
    if (v.empty()) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty value");
    }
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated string");
        }
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                ++i;
                switch (v[i]) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    default: out.push_back(v[i]); break;
                }
            } else {
                out.push_back(v[i]);
            }
        }
        return out;
    }
    return v;  // numbers, booleans and bare words keep their literal text
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
    Config config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(strip_comment(line));
        if (stripped.empty()) continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": malformed section header");
            }
            section = trim(stripped.substr(1, stripped.size() - 2));
            if (section.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            }
            config.section_order_.push_back(section);
            continue;
        }
        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(stripped.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        std::string full = section.empty() ? key : section + "." + key;
        config.values_[full] = parse_value(stripped.substr(eq + 1), origin, line_no);
    }
    return config;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not an integer: " + it->second);
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not a number: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("key '" + key + "' is not a boolean: " + it->second);
}

std::vector<std::string> Config::sections_under(const std::string& prefix) const {
    std::vector<std::string> out;
    const std::string want = prefix + ".";
    for (const auto& section : section_order_) {
        if (section.rfind(want, 0) == 0) {
            std::string rest = section.substr(want.size());
            if (!rest.empty() && rest.find('.') == std::string::npos &&
                std::find(out.begin(), out.end(), rest) == out.end()) {
                out.push_back(rest);
            }
        }
    }
    return out;
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::vector<BackendDescriptor> Config::backends() const {
    std::vector<BackendDescriptor> out;
    for (const auto& name : sections_under("backend")) {
        const std::string base = "backend." + name + ".";
        BackendDescriptor d;
        d.name = name;
        std::string kind = get_string(base + "kind", "completions");
        if (kind == "completions") {
            d.kind = BackendKind::Completions;
        } else if (kind == "embeddings") {
            d.kind = BackendKind::Embeddings;
        } else {
            throw ConfigError("backend '" + name + "': unknown kind '" + kind + "'");
        }
        std::string structure = get_string(base + "structure", "text");
        if (structure == "schema") d.output_structure = OutputStructure::Schema;
        else if (structure == "mode") d.output_structure = OutputStructure::Mode;
        else if (structure == "text") d.output_structure = OutputStructure::Text;
        else throw ConfigError("backend '" + name + "': unknown structure '" + structure + "'");
        d.endpoint = get_string(base + "endpoint");
        d.model_id = get_string(base + "model_id", name);
        if (has(base + "embedding_length")) {
            d.embedding_length = static_cast<int>(get_int(base + "embedding_length", 0));
        }
        d.api_key_env = get_string(base + "api_key_env");
        d.check();
        out.push_back(std::move(d));
    }
    return out;
}

PriceTable Config::prices() const {
    PriceTable table;
    for (const auto& name : sections_under("prices")) {
        const std::string base = "prices." + name + ".";
        table.prices[name] = {get_double(base + "input", 0.0), get_double(base + "output", 0.0)};
    }
    return table;
}

std::string Config::role_backend(const std::string& role) const {
    std::string backend = get_string("roles." + role);
    if (backend.empty()) {
        throw ConfigError("no backend assigned to role '" + role + "' (set [roles] " + role + ")");
    }
    return backend;
}

void register_backends_from_config(Gateway& gateway, const Config& config,
                                   const FacetList& facets) {
    auto descriptors = config.backends();
    if (descriptors.empty()) {
        throw ConfigError("config declares no [backend.*] sections");
    }
    auto http = std::make_shared<HttpTransport>(
        static_cast<int>(config.get_int("gateway.timeout_seconds", 60)));
    for (auto& d : descriptors) {
        if (d.endpoint.rfind("mock://", 0) == 0) {
            gateway.register_backend(d, make_scripted_mock(d, facets));
        } else {
            gateway.register_backend(d, http);
        }
    }
}

}  // namespace picepr
