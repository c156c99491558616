#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "picepr/cost.hpp"
#include "picepr/errors.hpp"
#include "picepr/facets.hpp"
#include "picepr/gateway.hpp"

namespace picepr {

/// TOML-style configuration: [section] / [section.sub] headers, `key =
/// value` scalars (quoted strings, numbers, booleans), `#` comments. Values
/// are addressed by dotted path ("gateway.cache_dir"). This is the single
/// file that declares the backend roster, component-role assignment,
/// template and cache directories, and the price table; CLI flags override
/// individual values.
class Config {
public:
    static Config load(const std::filesystem::path& path);
    static Config parse(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback = "") const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Section names directly under `prefix` ("backend" -> declared backend
    /// names, in declaration order).
    std::vector<std::string> sections_under(const std::string& prefix) const;

    void set(const std::string& key, const std::string& value);

    // Domain views over the raw keys.
    std::vector<BackendDescriptor> backends() const;
    PriceTable prices() const;
    std::string role_backend(const std::string& role) const;

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> section_order_;
};

/// Registers every configured backend on the gateway. Endpoints beginning
/// with "mock://" get the scripted deterministic transport; anything else
/// goes over HTTP.
void register_backends_from_config(Gateway& gateway, const Config& config,
                                   const FacetList& facets);

}  // namespace picepr
