#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "picepr/corpus.hpp"
#include "picepr/errors.hpp"

namespace picepr {

using ordered_json = nlohmann::ordered_json;

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct Metrics {
    double ra = 0.0;
    double ba = 0.0;
    double f1 = 0.0;
};

/// RA = (TP+TN)/total, BA = (recall + specificity)/2, F1 = 2TP/(2TP+FP+FN).
/// Degenerate denominators: a recall/specificity term whose class is absent
/// from the truth counts as 1; F1 is 0 when 2TP+FP+FN == 0. Throws
/// EmptyCounts on an all-zero matrix.
Metrics metrics(const ConfusionCounts& cc);

struct Prediction {
    std::string sample_id;
    LabelVector labels;
};

/// Confusion counts for one dimension, aligned by sample id. Predictions
/// whose id is missing from the truth raise Misalignment; truth rows without
/// a prediction are the excluded rows and are simply dropped.
ConfusionCounts confusion(const std::vector<Prediction>& predictions, const Corpus& truth,
                          std::size_t dimension);

struct McNemarResult {
    std::uint64_t b = 0;  // correct before, wrong after
    std::uint64_t c = 0;  // wrong before, correct after
    double chi2 = 0.0;
    double p = 1.0;
};

/// chi^2 = (b-c)^2/(b+c) against the chi-squared CDF with one degree of
/// freedom; b + c == 0 gives chi^2 = 0, p = 1.
McNemarResult mcnemar(std::uint64_t b, std::uint64_t c);

/// Upper tail P(X > chi2) of the chi-squared distribution with df = 1,
/// evaluated as erfc(sqrt(chi2/2)) with a local series / continued-fraction
/// erfc (no statistics dependency), accurate to better than 1e-10.
double chi_squared_df1_tail(double chi2);
double erfc_local(double x);

enum class Cell { TP, FP, TN, FN };

Cell classify_cell(int truth_bit, int predicted_bit);
const char* cell_name(Cell cell);

/// Flow counts between the baseline's confusion cell and the proposed
/// method's cell, over all dimensions flattened into one binary sequence.
struct TransitionFlows {
    std::array<std::array<std::uint64_t, 4>, 4> counts{};  // [from][to]
    std::uint64_t b = 0;
    std::uint64_t c = 0;

    ordered_json to_json() const;
};

TransitionFlows transitions(const Corpus& truth, const std::vector<Prediction>& baseline,
                            const std::vector<Prediction>& proposed);

struct DimensionReport {
    std::string code;
    ConfusionCounts counts;
    Metrics m;
};

struct EvalReport {
    std::string schema;
    std::vector<DimensionReport> dimensions;
    std::size_t evaluated = 0;  // rows with predictions
    std::size_t excluded = 0;   // truth rows without predictions
    double error_rate = 0.0;
};

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions, const Corpus& truth);

ordered_json report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);

void save_predictions_jsonl(const std::vector<Prediction>& predictions,
                            const std::filesystem::path& path, SchemaKind schema);
std::vector<Prediction> load_predictions_jsonl(const std::filesystem::path& path,
                                               SchemaKind schema);

}  // namespace picepr
