#include "picepr/cost.hpp"

namespace picepr {

const Price& PriceTable::at(const std::string& backend) const {
    auto it = prices.find(backend);
    if (it == prices.end()) {
        throw Error("MissingPrice", "no price entry for backend '" + backend + "'");
    }
    return it->second;
}

nlohmann::ordered_json cost_estimate(const std::vector<RunUsage>& runs, const PriceTable& prices,
                                     double overhead_multiplier,
                                     const std::set<std::string>& overhead_variants) {
    nlohmann::ordered_json report;
    auto entries = nlohmann::ordered_json::array();
    double grand_total = 0.0;
    std::uint64_t total_input = 0;
    std::uint64_t total_output = 0;

    for (const auto& run : runs) {
        std::uint64_t input = 0;
        std::uint64_t output = 0;
        double token_cost = 0.0;
        for (const auto& [backend, usage] : run.per_backend) {
            const Price& price = prices.at(backend);
            input += usage.input_tokens;
            output += usage.output_tokens;
            token_cost += static_cast<double>(usage.input_tokens) * price.input +
                          static_cast<double>(usage.output_tokens) * price.output;
        }
        bool overhead = overhead_variants.count(run.variant) > 0;
        if (overhead) token_cost *= overhead_multiplier;
        double total = token_cost + run.processing_units;

        nlohmann::ordered_json entry;
        entry["run"] = run.run_name;
        entry["variant"] = run.variant;
        entry["input_tokens"] = input;
        entry["output_tokens"] = output;
        entry["decoding_overhead_applied"] = overhead;
        entry["token_cost"] = token_cost;
        entry["processing_units"] = run.processing_units;
        entry["total_cost"] = total;
        entries.push_back(std::move(entry));

        grand_total += total;
        total_input += input;
        total_output += output;
    }

    report["runs"] = std::move(entries);
    report["total_input_tokens"] = total_input;
    report["total_output_tokens"] = total_output;
    report["total_cost"] = grand_total;
    return report;
}

}  // namespace picepr
