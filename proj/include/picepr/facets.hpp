#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace picepr {

inline constexpr std::size_t kFacetCount = 77;

/// The 77 personality-facet identifiers scored by the Psycho component.
/// The identifiers themselves are configuration (one name per line in a
/// plain-text file); the fixed cardinality and the binary score domain are
/// the contract. The built-in list is a documented placeholder.
class FacetList {
public:
    static FacetList placeholder();
    static FacetList load(const std::filesystem::path& path);

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    const std::string& at(std::size_t i) const { return names_.at(i); }

private:
    explicit FacetList(std::vector<std::string> names);
    std::vector<std::string> names_;
};

/// Per-sample binary facet scores, ordered like the configured FacetList.
struct FacetVector {
    std::string sample_id;
    std::vector<int> bits;
};

}  // namespace picepr
