#pragma once

#include <map>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "picepr/errors.hpp"
#include "picepr/gateway.hpp"

namespace picepr {

struct Price {
    double input = 0.0;   // currency per input token
    double output = 0.0;  // currency per output token
};

/// Per-backend token prices. Lookup of an unpriced backend throws
/// MissingPrice.
struct PriceTable {
    std::map<std::string, Price> prices;

    const Price& at(const std::string& backend) const;
};

/// Aggregated spend of one run: token usage plus an optional processing
/// charge supplied by configuration (the FLOP-style term is an input here,
/// not derived from model internals).
struct CostLedger {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double input_price = 0.0;
    double output_price = 0.0;
    double processing_units = 0.0;

    double cost() const {
        return static_cast<double>(input_tokens) * input_price +
               static_cast<double>(output_tokens) * output_price + processing_units;
    }

    CostLedger& operator+=(const CostLedger& other) {
        input_tokens += other.input_tokens;
        output_tokens += other.output_tokens;
        processing_units += other.processing_units;
        return *this;
    }
};

struct RunUsage {
    std::string run_name;
    std::string variant;  // "regular", "picepr", ...
    std::map<std::string, TokenUsage> per_backend;
    double processing_units = 0.0;
};

/// Per-run and total cost report. Runs whose variant is listed in
/// `overhead_variants` have their token cost multiplied by
/// `overhead_multiplier` (the decoding-overhead convention; 1.0 disables).
nlohmann::ordered_json cost_estimate(const std::vector<RunUsage>& runs, const PriceTable& prices,
                                     double overhead_multiplier,
                                     const std::set<std::string>& overhead_variants);

}  // namespace picepr
