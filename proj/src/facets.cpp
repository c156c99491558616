#include "picepr/facets.hpp"

#include <fstream>
#include <set>

#include "picepr/errors.hpp"
#include "picepr/util.hpp"

namespace picepr {

FacetList::FacetList(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() != kFacetCount) {
        throw ConfigError("facet list must have exactly " + std::to_string(kFacetCount) +
                          " entries, got " + std::to_string(names_.size()));
    }
    std::set<std::string> unique(names_.begin(), names_.end());
    if (unique.size() != names_.size()) {
        throw ConfigError("facet list contains duplicate names");
    }
}

FacetList FacetList::placeholder() {
    std::vector<std::string> names;
    names.reserve(kFacetCount);
    for (std::size_t i = 1; i <= kFacetCount; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "facet_%02zu", i);
        names.emplace_back(buf);
    }
    return FacetList(std::move(names));
}

FacetList FacetList::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open facet list: " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        std::string name = trim(line);
        if (name.empty() || name.front() == '#') continue;
        names.push_back(std::move(name));
    }
    return FacetList(std::move(names));
}

}  // namespace picepr
