#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "picepr/corpus.hpp"
#include "picepr/facets.hpp"
#include "picepr/gateway.hpp"
#include "picepr/structured.hpp"
#include "picepr/templates.hpp"

namespace picepr {

struct RequestDefaults {
    double temperature = 0.2;
    int max_output_tokens = 1024;
};

// ---------------------------------------------------------------------------
// Stage records: the per-sample outputs each component persists.
// ---------------------------------------------------------------------------

struct SummaryRecord {
    std::string sample_id;
    std::string summary;
    std::string evidence;                      // the CoT analysis section
    std::optional<LabelVector> echoed_labels;  // Train mode only
};

struct ClassifyRecord {
    std::string sample_id;
    std::string analysis;  // generated before the labels, never empty
    LabelVector labels;
};

struct MimicRecord {
    std::string sample_id;
    std::string positive_text;
    std::string negative_text;
    LabelVector source_labels;
};

/// Outcome of one component invocation over one sample: either a value, or
/// the parse/validation failure that excludes the row.
template <typename T>
struct StageResult {
    std::optional<T> value;
    ParseOutcome outcome;

    bool ok() const { return value.has_value(); }
};

// ---------------------------------------------------------------------------
// Output schemas and label rendering.
// ---------------------------------------------------------------------------

/// JSON key used for one dimension in Classify output ("O" for Big-5,
/// "SN" for the MBTI S/N dichotomy).
std::string classify_label_key(const Dimension& dim);
/// Letter for an MBTI bit ("S/N", 1 -> "N").
std::string pole_letter(const Dimension& dim, int bit);

OutputSchema summary_output_schema();
OutputSchema psycho_output_schema(const FacetList& facets);
OutputSchema classify_output_schema(SchemaKind schema);
OutputSchema mimic_output_schema();

/// Human-readable label block substituted into Train-mode prompts.
std::string render_labels(const LabelVector& labels);
/// Facet scores as the compact JSON object Classify receives from Psycho.
std::string render_facets(const FacetList& facets, const FacetVector& vec);
/// The assistant-style JSON answer for a labeled sample: analysis text
/// first, then the per-dimension labels in schema order.
std::string render_classify_answer(const std::string& analysis, const LabelVector& labels);

/// Parses the label fields of a validated Classify document.
LabelVector labels_from_classify_doc(const ordered_json& doc, SchemaKind schema);

// ---------------------------------------------------------------------------
// The template set for all component roles.
// ---------------------------------------------------------------------------

/// Prompt wording is configuration: one file per component under a template
/// directory. Structure (system/user split, gated label blocks, placeholder
/// names) is contract and is validated at load time.
struct TemplateSet {
    PromptTemplate summary;
    PromptTemplate psycho;
    PromptTemplate classify_big5;
    PromptTemplate classify_mbti;
    PromptTemplate classify_raw_big5;
    PromptTemplate classify_raw_mbti;
    PromptTemplate mimic;
    std::optional<PromptTemplate> mimic_facets;  // used when the facet merge is on

    static TemplateSet load(const std::filesystem::path& dir);

    const PromptTemplate& classify_for(SchemaKind schema, bool raw) const;
    const PromptTemplate& mimic_for(bool with_facets) const;
};

// ---------------------------------------------------------------------------
// Prompt builders (pure) and runners (one gateway call per sample).
// ---------------------------------------------------------------------------

ChatRequest build_summary_prompt(const Sample& sample, PromptMode mode,
                                 const PromptTemplate& tmpl, const BackendDescriptor& backend,
                                 const RequestDefaults& defaults = {});

ChatRequest build_psycho_prompt(const std::string& sample_text, const FacetList& facets,
                                const PromptTemplate& tmpl, const BackendDescriptor& backend,
                                const RequestDefaults& defaults = {});

struct ClassifyExemplar {
    std::string user_content;
    std::string assistant_content;
};

/// Classify input: either the raw sample text (baseline) or the
/// summary-plus-facets produced upstream.
struct ClassifyInput {
    SchemaKind schema;
    std::string sample_id;
    std::optional<std::string> raw_text;  // baseline variant
    std::optional<std::string> summary;   // series variant
    std::optional<std::string> facets_json;

    static ClassifyInput raw(SchemaKind schema, const Sample& sample);
    static ClassifyInput series(SchemaKind schema, const SummaryRecord& summary,
                                const FacetList& facets, const FacetVector& facet_vec);
};

ChatRequest build_classify_prompt(const ClassifyInput& input, int shots,
                                  const std::vector<ClassifyExemplar>& exemplars,
                                  const TemplateSet& templates, const BackendDescriptor& backend,
                                  const RequestDefaults& defaults = {});

/// facets_json, when present, is substituted into the template's
/// {personality_facets} slot (the optional facet merge, off by default).
ChatRequest build_mimic_prompt(const SummaryRecord& summary, const LabelVector& labels,
                               const PromptTemplate& tmpl, const BackendDescriptor& backend,
                               const RequestDefaults& defaults = {},
                               const std::optional<std::string>& facets_json = std::nullopt);

StageResult<SummaryRecord> run_summary(const Sample& sample, PromptMode mode, Gateway& gateway,
                                       const std::string& backend_name, const PromptTemplate& tmpl,
                                       const RequestDefaults& defaults = {});

StageResult<FacetVector> run_psycho(const std::string& sample_id, const std::string& sample_text,
                                    Gateway& gateway, const std::string& backend_name,
                                    const FacetList& facets, const PromptTemplate& tmpl,
                                    const RequestDefaults& defaults = {});

StageResult<ClassifyRecord> run_classify(const ClassifyInput& input, int shots,
                                         const std::vector<ClassifyExemplar>& exemplars,
                                         Gateway& gateway, const std::string& backend_name,
                                         const TemplateSet& templates,
                                         const RequestDefaults& defaults = {});

StageResult<MimicRecord> run_mimic(const SummaryRecord& summary, const LabelVector& labels,
                                   Gateway& gateway, const std::string& backend_name,
                                   const PromptTemplate& tmpl, const RequestDefaults& defaults = {},
                                   const std::optional<std::string>& facets_json = std::nullopt);

/// Picks the two-shot exemplars: the first training sample plus the earliest
/// sample with the most complementary label pattern. Deterministic given the
/// (already seed-shuffled) training order.
std::vector<ClassifyExemplar> pick_two_shot_exemplars(const Corpus& train);

// ---------------------------------------------------------------------------
// Fine-tuning dataset construction.
// ---------------------------------------------------------------------------

struct ChatExchange {
    std::string system;
    std::string user;
    std::string assistant;
};

/// Builds the chat-completion fine-tuning corpus from Train-mode summary
/// records: the assistant turn replays the evidence followed by the label
/// answer. `corpus` resolves sample ids back to the original user text.
std::vector<ChatExchange> build_finetune_corpus(const std::vector<SummaryRecord>& records,
                                                const Corpus& corpus,
                                                const std::string& system_prompt);

void save_finetune_jsonl(const std::vector<ChatExchange>& exchanges,
                         const std::filesystem::path& path);

}  // namespace picepr
