#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "picepr/artifacts.hpp"
#include "picepr/components.hpp"
#include "picepr/corpus.hpp"
#include "picepr/gateway.hpp"
#include "picepr/metrics.hpp"

namespace picepr {

enum class ContentsVariant { Regular, RegularTunedDatasetOnly, Picepr, Picepr2Shot };

std::string variant_name(ContentsVariant v);
ContentsVariant variant_from_name(const std::string& name);

struct ContentsRunConfig {
    ContentsVariant variant = ContentsVariant::Regular;
    std::string summary_backend;   // series variants only
    std::string psycho_backend;    // series variants only
    std::string classify_backend;  // always
    std::filesystem::path artifact_dir;
    std::string split_name = "test";
    std::uint64_t seed = 42;
    int workers = 4;
    RequestDefaults defaults;
    std::optional<Corpus> exemplar_source;  // training samples for the two-shot variant

    void check() const;
};

struct ContentsRunResult {
    std::vector<Prediction> predictions;
    ErrorLedger ledger;
    std::map<std::string, TokenUsage> usage;  // this run's non-cached usage, per backend
    bool reused_completed_run = false;
};

/// Runs one Contents-pipeline variant over a corpus split. Samples are
/// processed independently (up to config.workers in parallel); every stage
/// output lands in the run directory as a StageRecord, per-sample failures
/// go to the ledger instead of aborting the run, and a manifest seals the
/// directory once the run completes. Rerunning a sealed directory reuses
/// its artifacts and issues no backend calls.
ContentsRunResult run_contents(const ContentsRunConfig& config, const Corpus& split,
                               Gateway& gateway, const TemplateSet& templates,
                               const FacetList& facets);

/// Builds the fine-tuning dataset for the tuned-classifier variant: Train
/// mode summaries over the labeled split, then one chat exchange per
/// surviving record, written as finetune.jsonl in the run directory. The
/// fine-tune job itself is out of scope here.
struct RtDatasetResult {
    std::filesystem::path corpus_path;
    std::size_t exchanges = 0;
    ErrorLedger ledger;
};

RtDatasetResult run_rt_dataset_build(const ContentsRunConfig& config, const Corpus& train_split,
                                     Gateway& gateway, const TemplateSet& templates);

// ---------------------------------------------------------------------------
// Fine-tuning numerics.
// ---------------------------------------------------------------------------

/// -sum log p_t over the per-token probabilities assigned to the true
/// tokens. Probabilities must lie in (0, 1].
double token_cross_entropy(const std::vector<double>& true_token_probs);

struct WeightMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    static WeightMatrix zeros(std::size_t rows, std::size_t cols);
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct LowRankPair {
    WeightMatrix a;  // d x r
    WeightMatrix b;  // r x k
};

/// W' = W + A * B in double precision. Shape conformance (including
/// r <= min(d, k)) is enforced.
WeightMatrix lora_merge(const WeightMatrix& w, const LowRankPair& lr);

}  // namespace picepr
