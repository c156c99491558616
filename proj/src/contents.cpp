#include "picepr/contents.hpp"

#include <cmath>
#include <fstream>

#include "picepr/util.hpp"

namespace picepr {

std::string variant_name(ContentsVariant v) {
    switch (v) {
        case ContentsVariant::Regular: return "regular";
        case ContentsVariant::RegularTunedDatasetOnly: return "regular_tuned";
        case ContentsVariant::Picepr: return "picepr";
        case ContentsVariant::Picepr2Shot: return "picepr2";
    }
    return "regular";
}

ContentsVariant variant_from_name(const std::string& name) {
    if (name == "regular") return ContentsVariant::Regular;
    if (name == "regular_tuned") return ContentsVariant::RegularTunedDatasetOnly;
    if (name == "picepr") return ContentsVariant::Picepr;
    if (name == "picepr2") return ContentsVariant::Picepr2Shot;
    throw ConfigError("unknown contents variant '" + name + "'");
}

void ContentsRunConfig::check() const {
    if (classify_backend.empty()) {
        throw ConfigError("contents run needs a classify backend");
    }
    bool series = variant == ContentsVariant::Picepr || variant == ContentsVariant::Picepr2Shot;
    if (series && (summary_backend.empty() || psycho_backend.empty())) {
        throw ConfigError("series variants need summary and psycho backends");
    }
    if (variant == ContentsVariant::Picepr2Shot && !exemplar_source) {
        throw ConfigError("two-shot variant needs an exemplar source corpus");
    }
    if (artifact_dir.empty()) {
        throw ConfigError("contents run needs an artifact directory");
    }
}

namespace {

struct SampleOutcome {
    bool failed = false;
    std::optional<LabelVector> labels;
};

// Per-sample records are rebuilt from stage artifacts when present, so a
// resumed run only touches the gateway for samples with no persisted record.
struct ClassifyStagePayload {
    bool ok = false;
    std::optional<LabelVector> labels;
};

std::optional<ClassifyStagePayload> stored_classify(const StageStore& store,
                                                    const std::string& sample_id,
                                                    SchemaKind schema) {
    const ordered_json* rec = store.find("classify", sample_id);
    if (!rec) return std::nullopt;
    ClassifyStagePayload payload;
    payload.ok = rec->value("ok", false);
    if (payload.ok && rec->contains("labels")) {
        payload.labels = make_label_vector(schema, rec->at("labels").get<std::vector<int>>());
    }
    return payload;
}

ordered_json failure_payload(const ParseOutcome& outcome) {
    ordered_json j;
    j["ok"] = false;
    j["failure"] = outcome.failure.value_or("unknown");
    return j;
}

}  // namespace

ContentsRunResult run_contents(const ContentsRunConfig& config, const Corpus& split,
                               Gateway& gateway, const TemplateSet& templates,
                               const FacetList& facets) {
    config.check();
    std::filesystem::create_directories(config.artifact_dir);

    // A sealed run directory is reused verbatim: its artifacts are already
    // complete and the manifest is immutable.
    if (auto manifest = RunManifest::read(config.artifact_dir)) {
        ContentsRunResult result;
        result.reused_completed_run = true;
        result.ledger = manifest->ledger;
        result.predictions =
            load_predictions_jsonl(config.artifact_dir / "predictions.jsonl", split.schema);
        return result;
    }

    const std::string started = iso8601_now();
    const GatewayStats before = gateway.stats();
    StageStore store(config.artifact_dir);
    const bool series =
        config.variant == ContentsVariant::Picepr || config.variant == ContentsVariant::Picepr2Shot;
    const int shots = config.variant == ContentsVariant::Picepr2Shot ? 2 : 0;
    std::vector<ClassifyExemplar> exemplars;
    if (shots == 2) exemplars = pick_two_shot_exemplars(*config.exemplar_source);

    std::vector<SampleOutcome> outcomes(split.size());

    parallel_for(split.size(), config.workers, [&](std::size_t i) {
        const Sample& sample = split.samples[i];
        SampleOutcome& out = outcomes[i];

        if (auto stored = stored_classify(store, sample.id, split.schema)) {
            out.failed = !stored->ok;
            out.labels = stored->labels;
            return;
        }

        ClassifyInput input = ClassifyInput::raw(split.schema, sample);
        if (series) {
            std::optional<SummaryRecord> summary;
            std::optional<FacetVector> facet_vec;

            if (const ordered_json* rec = store.find("summary", sample.id)) {
                if (rec->value("ok", false)) {
                    SummaryRecord s;
                    s.sample_id = sample.id;
                    s.summary = rec->at("summary").get<std::string>();
                    s.evidence = rec->at("analysis").get<std::string>();
                    summary = std::move(s);
                }
            } else {
                auto result = run_summary(sample, PromptMode::Infer, gateway,
                                          config.summary_backend, templates.summary,
                                          config.defaults);
                if (result.ok()) {
                    ordered_json j;
                    j["ok"] = true;
                    j["summary"] = result.value->summary;
                    j["analysis"] = result.value->evidence;
                    store.append("summary", sample.id, std::move(j));
                    summary = std::move(result.value);
                } else {
                    store.append("summary", sample.id, failure_payload(result.outcome));
                }
            }

            // Psycho reads the raw text, not the summary, so it runs for
            // every sample even when the summary stage failed.
            if (const ordered_json* rec = store.find("psycho", sample.id)) {
                if (rec->value("ok", false)) {
                    FacetVector v;
                    v.sample_id = sample.id;
                    v.bits = rec->at("bits").get<std::vector<int>>();
                    facet_vec = std::move(v);
                }
            } else {
                auto result = run_psycho(sample.id, sample.text, gateway, config.psycho_backend,
                                         facets, templates.psycho, config.defaults);
                if (result.ok()) {
                    ordered_json j;
                    j["ok"] = true;
                    j["bits"] = result.value->bits;
                    store.append("psycho", sample.id, std::move(j));
                    facet_vec = std::move(result.value);
                } else {
                    store.append("psycho", sample.id, failure_payload(result.outcome));
                }
            }

            if (!summary || !facet_vec) {
                out.failed = true;
                return;  // classify is skipped for upstream failures
            }
            input = ClassifyInput::series(split.schema, *summary, facets, *facet_vec);
        }

        auto result = run_classify(input, shots, exemplars, gateway, config.classify_backend,
                                   templates, config.defaults);
        if (result.ok()) {
            ordered_json j;
            j["ok"] = true;
            j["analysis"] = result.value->analysis;
            j["labels"] = result.value->labels.bits;
            store.append("classify", sample.id, std::move(j));
            out.labels = result.value->labels;
        } else {
            store.append("classify", sample.id, failure_payload(result.outcome));
            out.failed = true;
        }
    });

    ContentsRunResult result;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].failed || !outcomes[i].labels) {
            record_failure(result.ledger);
            continue;
        }
        record_success(result.ledger);
        result.predictions.push_back({split.samples[i].id, *outcomes[i].labels});
    }

    save_predictions_jsonl(result.predictions, config.artifact_dir / "predictions.jsonl",
                           split.schema);

    // Reports need ground truth; synthetic or pre-labeled splits get one.
    bool labeled = !split.samples.empty();
    for (const auto& s : split.samples) labeled = labeled && s.labels.has_value();
    if (labeled && !result.predictions.empty()) {
        EvalReport report = evaluate_predictions(result.predictions, split);
        std::ofstream json_out(config.artifact_dir / "report.json", std::ios::trunc);
        json_out << report_to_json(report).dump(2) << "\n";
        std::ofstream text_out(config.artifact_dir / "report.txt", std::ios::trunc);
        text_out << report_to_text(report);
    }

    const GatewayStats after = gateway.stats();
    for (const auto& [backend, usage] : after.usage_per_backend) {
        TokenUsage delta = usage;
        auto it = before.usage_per_backend.find(backend);
        if (it != before.usage_per_backend.end()) {
            delta.input_tokens -= it->second.input_tokens;
            delta.output_tokens -= it->second.output_tokens;
        }
        if (delta.input_tokens || delta.output_tokens) result.usage[backend] = delta;
    }

    RunManifest manifest;
    manifest.run_id = config.artifact_dir.filename().string();
    manifest.command = "run-contents";
    manifest.variant = variant_name(config.variant);
    manifest.config = {{"split", config.split_name},
                       {"classify_backend", config.classify_backend},
                       {"summary_backend", config.summary_backend},
                       {"psycho_backend", config.psycho_backend},
                       {"shots", shots}};
    manifest.seed = config.seed;
    manifest.ledger = result.ledger;
    manifest.usage_per_backend = result.usage;
    manifest.started_at = started;
    manifest.finished_at = iso8601_now();
    manifest.write(config.artifact_dir);
    return result;
}

RtDatasetResult run_rt_dataset_build(const ContentsRunConfig& config, const Corpus& train_split,
                                     Gateway& gateway, const TemplateSet& templates) {
    if (config.summary_backend.empty()) {
        throw ConfigError("dataset build needs a summary backend");
    }
    for (const auto& s : train_split.samples) {
        if (!s.labels) {
            throw Error("MissingLabels", "fine-tune dataset needs a labeled split; '" + s.id +
                                             "' is unlabeled");
        }
    }
    std::filesystem::create_directories(config.artifact_dir);
    StageStore store(config.artifact_dir);

    std::vector<std::optional<SummaryRecord>> records(train_split.size());
    parallel_for(train_split.size(), config.workers, [&](std::size_t i) {
        const Sample& sample = train_split.samples[i];
        if (const ordered_json* rec = store.find("summary_train", sample.id)) {
            if (rec->value("ok", false)) {
                SummaryRecord s;
                s.sample_id = sample.id;
                s.summary = rec->at("summary").get<std::string>();
                s.evidence = rec->at("analysis").get<std::string>();
                s.echoed_labels = sample.labels;
                records[i] = std::move(s);
            }
            return;
        }
        auto result = run_summary(sample, PromptMode::Train, gateway, config.summary_backend,
                                  templates.summary, config.defaults);
        if (result.ok()) {
            ordered_json j;
            j["ok"] = true;
            j["summary"] = result.value->summary;
            j["analysis"] = result.value->evidence;
            store.append("summary_train", sample.id, std::move(j));
            records[i] = std::move(result.value);
        } else {
            store.append("summary_train", sample.id, failure_payload(result.outcome));
        }
    });

    RtDatasetResult out;
    std::vector<SummaryRecord> surviving;
    for (auto& rec : records) {
        if (rec) {
            record_success(out.ledger);
            surviving.push_back(std::move(*rec));
        } else {
            record_failure(out.ledger);
        }
    }

    const std::string system_prompt = render_template_text(
        templates.classify_for(train_split.schema, /*raw=*/true).system, PromptMode::Infer, {});
    auto exchanges = build_finetune_corpus(surviving, train_split, system_prompt);
    out.corpus_path = config.artifact_dir / "finetune.jsonl";
    save_finetune_jsonl(exchanges, out.corpus_path);
    out.exchanges = exchanges.size();
    return out;
}

double token_cross_entropy(const std::vector<double>& true_token_probs) {
    double total = 0.0;
    for (double p : true_token_probs) {
        if (!(p > 0.0) || p > 1.0) {
            throw Error("NonPositiveProbability",
                        "token probabilities must lie in (0, 1], got " + std::to_string(p));
        }
        total -= std::log(p);
    }
    return total;
}

WeightMatrix WeightMatrix::zeros(std::size_t rows, std::size_t cols) {
    WeightMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.data.assign(rows * cols, 0.0);
    return m;
}

WeightMatrix lora_merge(const WeightMatrix& w, const LowRankPair& lr) {
    const std::size_t d = w.rows;
    const std::size_t k = w.cols;
    const std::size_t r = lr.a.cols;
    if (lr.a.rows != d || lr.b.cols != k || lr.b.rows != r) {
        throw Error("ShapeMismatch", "lora_merge needs A: d x r, B: r x k conforming with W: d x k");
    }
    if (r < 1 || r > std::min(d, k)) {
        throw Error("ShapeMismatch", "rank r must satisfy 1 <= r <= min(d, k)");
    }
    WeightMatrix out = w;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < r; ++t) {
                acc += lr.a.at(i, t) * lr.b.at(t, j);
            }
            out.at(i, j) += acc;
        }
    }
    return out;
}

}  // namespace picepr
