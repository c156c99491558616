#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "picepr/components.hpp"
#include "picepr/contrastive.hpp"
#include "picepr/corpus.hpp"
#include "picepr/gateway.hpp"
#include "picepr/metrics.hpp"
#include "picepr/mlp.hpp"

namespace picepr {

enum class EmbeddingsVariant { Regular, RegularTuned, AugmentedTuned, Picepr };

std::string embeddings_variant_name(EmbeddingsVariant v);
EmbeddingsVariant embeddings_variant_from_name(const std::string& name);

struct EmbeddingsRunConfig {
    EmbeddingsVariant variant = EmbeddingsVariant::Regular;
    std::string vector_backend;
    std::string summary_backend;  // series variant
    std::string mimic_backend;    // augmented variants
    std::string psycho_backend;   // facet features, when enabled
    bool use_facets = false;      // concatenates the 77 facet bits (+77 input dims)
    bool mimic_facets = false;    // merge facet scores into the Mimic prompt (off by default)
    std::filesystem::path artifact_dir;
    std::uint64_t seed = 42;
    int workers = 4;
    RequestDefaults defaults;

    std::vector<std::size_t> hidden = {64};
    LossSpec loss{LossKind::Focal, 1.0, 2.0};
    double learning_rate = 0.05;
    int epochs = 100;
    int batch_size = 16;

    ProjectionTrainConfig projection{50, 0.01};
    double margin = 1.0;
    /// Share of same/different-label pairs vs Mimic-text pairs.
    double label_pair_fraction = 0.5;
    std::size_t max_label_pairs = 2000;

    void check() const;
};

struct EmbeddingsRunResult {
    std::vector<Prediction> predictions;  // test split
    ErrorLedger ledger;                   // summary/mimic rows that failed
    double test_mean_ba = 0.0;
    std::map<std::string, TokenUsage> usage;
    bool reused_completed_run = false;
};

/// Runs one Embeddings-pipeline variant: extract embeddings, optionally
/// build the augmentation set (Mimic, with or without a Summary stage) and
/// contrastive-tune a projection over the frozen embeddings, then train the
/// classifier head and predict the test split. Fine-tuning then head
/// training are chained (projection frozen before the head sees it).
EmbeddingsRunResult run_embeddings(const EmbeddingsRunConfig& config, const Corpus& train,
                                   const Corpus& val, const Corpus& test, Gateway& gateway,
                                   const TemplateSet& templates, const FacetList& facets);

// ---------------------------------------------------------------------------
// Building blocks, usable on their own from the CLI.
// ---------------------------------------------------------------------------

struct EmbeddedSample {
    std::string sample_id;
    EmbeddingVec vector;
};

std::vector<EmbeddedSample> extract_embeddings(Gateway& gateway, const std::string& backend,
                                               const Corpus& corpus, int workers);

void save_embeddings_jsonl(const std::vector<EmbeddedSample>& embeddings,
                           const std::string& backend, const std::filesystem::path& path);
std::vector<EmbeddedSample> load_embeddings_jsonl(const std::filesystem::path& path);

struct AugmentedText {
    std::string sample_id;
    std::string positive_text;
    std::string negative_text;
    LabelVector labels;
};

/// Same/different-label pairs drawn deterministically from the labeled
/// embeddings, alternating positive and negative, capped at `max_pairs`.
std::vector<ContrastivePair> build_label_pairs(const std::vector<EmbeddedSample>& embeddings,
                                               const Corpus& labels, double margin,
                                               std::size_t max_pairs);

/// Original-vs-augmented pairs: (original, mimic positive) with y = 1 and
/// (original, mimic negative) with y = 0.
std::vector<ContrastivePair> build_mimic_pairs(
    const std::vector<EmbeddedSample>& originals,
    const std::vector<std::pair<std::string, EmbeddingVec>>& positive,
    const std::vector<std::pair<std::string, EmbeddingVec>>& negative, double margin);

/// LabeledVector training rows from embeddings (optionally projected and
/// optionally extended with facet bits).
std::vector<LabeledVector> to_labeled_vectors(const std::vector<EmbeddedSample>& embeddings,
                                              const Corpus& labels, const Projection* projection,
                                              const std::map<std::string, std::vector<int>>* facet_bits);

}  // namespace picepr
