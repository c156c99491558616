#include "picepr/embeddings.hpp"

#include <fstream>

#include "picepr/artifacts.hpp"
#include "picepr/util.hpp"

namespace picepr {

std::string embeddings_variant_name(EmbeddingsVariant v) {
    switch (v) {
        case EmbeddingsVariant::Regular: return "vr";
        case EmbeddingsVariant::RegularTuned: return "vrt";
        case EmbeddingsVariant::AugmentedTuned: return "vat";
        case EmbeddingsVariant::Picepr: return "vpr";
    }
    return "vr";
}

EmbeddingsVariant embeddings_variant_from_name(const std::string& name) {
    if (name == "vr") return EmbeddingsVariant::Regular;
    if (name == "vrt") return EmbeddingsVariant::RegularTuned;
    if (name == "vat") return EmbeddingsVariant::AugmentedTuned;
    if (name == "vpr") return EmbeddingsVariant::Picepr;
    throw ConfigError("unknown embeddings variant '" + name + "'");
}

void EmbeddingsRunConfig::check() const {
    if (vector_backend.empty()) throw ConfigError("embeddings run needs a vector backend");
    bool augmented =
        variant == EmbeddingsVariant::AugmentedTuned || variant == EmbeddingsVariant::Picepr;
    if (augmented && mimic_backend.empty()) {
        throw ConfigError("augmented variants need a mimic backend");
    }
    if (variant == EmbeddingsVariant::Picepr && summary_backend.empty()) {
        throw ConfigError("the series variant needs a summary backend");
    }
    if ((use_facets || mimic_facets) && psycho_backend.empty()) {
        throw ConfigError("facet features need a psycho backend");
    }
    if (artifact_dir.empty()) throw ConfigError("embeddings run needs an artifact directory");
    if (label_pair_fraction < 0.0 || label_pair_fraction > 1.0) {
        throw ConfigError("label_pair_fraction must lie in [0, 1]");
    }
}

std::vector<EmbeddedSample> extract_embeddings(Gateway& gateway, const std::string& backend,
                                               const Corpus& corpus, int workers) {
    std::vector<EmbeddedSample> out(corpus.size());
    parallel_for(corpus.size(), workers, [&](std::size_t i) {
        out[i].sample_id = corpus.samples[i].id;
        out[i].vector = gateway.embed(backend, corpus.samples[i].text);
    });
    return out;
}

void save_embeddings_jsonl(const std::vector<EmbeddedSample>& embeddings,
                           const std::string& backend, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open for writing: " + path.string());
    for (const auto& e : embeddings) {
        ordered_json j;
        j["sample_id"] = e.sample_id;
        j["backend"] = backend;
        j["vector"] = e.vector;
        out << j.dump() << "\n";
    }
}

std::vector<EmbeddedSample> load_embeddings_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open: " + path.string());
    std::vector<EmbeddedSample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto j = ordered_json::parse(line);
        out.push_back({j.at("sample_id").get<std::string>(), j.at("vector").get<EmbeddingVec>()});
    }
    return out;
}

std::vector<ContrastivePair> build_label_pairs(const std::vector<EmbeddedSample>& embeddings,
                                               const Corpus& labels, double margin,
                                               std::size_t max_pairs) {
    std::map<std::string, const LabelVector*> by_id;
    for (const auto& s : labels.samples) {
        if (s.labels) by_id[s.id] = &*s.labels;
    }
    std::vector<ContrastivePair> positives;
    std::vector<ContrastivePair> negatives;
    for (std::size_t i = 0; i < embeddings.size() && positives.size() + negatives.size() < 4 * max_pairs;
         ++i) {
        auto li = by_id.find(embeddings[i].sample_id);
        if (li == by_id.end()) continue;
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            auto lj = by_id.find(embeddings[j].sample_id);
            if (lj == by_id.end()) continue;
            bool same = li->second->bits == lj->second->bits;
            auto& bucket = same ? positives : negatives;
            if (bucket.size() >= max_pairs) continue;
            bucket.push_back(
                {embeddings[i].vector, embeddings[j].vector, same ? 1 : 0, margin});
        }
    }
    // Alternate so truncation keeps the mix balanced.
    std::vector<ContrastivePair> out;
    std::size_t count = std::min({max_pairs, positives.size() + negatives.size()});
    std::size_t pi = 0;
    std::size_t ni = 0;
    while (out.size() < count) {
        if (pi < positives.size()) out.push_back(positives[pi++]);
        if (out.size() < count && ni < negatives.size()) out.push_back(negatives[ni++]);
        if (pi >= positives.size() && ni >= negatives.size()) break;
    }
    return out;
}

std::vector<ContrastivePair> build_mimic_pairs(
    const std::vector<EmbeddedSample>& originals,
    const std::vector<std::pair<std::string, EmbeddingVec>>& positive,
    const std::vector<std::pair<std::string, EmbeddingVec>>& negative, double margin) {
    std::map<std::string, const EmbeddingVec*> by_id;
    for (const auto& e : originals) by_id[e.sample_id] = &e.vector;
    std::vector<ContrastivePair> out;
    for (const auto& [id, vec] : positive) {
        auto it = by_id.find(id);
        if (it != by_id.end()) out.push_back({*it->second, vec, 1, margin});
    }
    for (const auto& [id, vec] : negative) {
        auto it = by_id.find(id);
        if (it != by_id.end()) out.push_back({*it->second, vec, 0, margin});
    }
    return out;
}

std::vector<LabeledVector> to_labeled_vectors(
    const std::vector<EmbeddedSample>& embeddings, const Corpus& labels,
    const Projection* projection, const std::map<std::string, std::vector<int>>* facet_bits) {
    std::map<std::string, const LabelVector*> by_id;
    for (const auto& s : labels.samples) {
        if (s.labels) by_id[s.id] = &*s.labels;
    }
    std::vector<LabeledVector> out;
    for (const auto& e : embeddings) {
        auto it = by_id.find(e.sample_id);
        if (it == by_id.end()) continue;
        LabeledVector lv;
        lv.input = projection ? projection->apply(e.vector) : e.vector;
        if (facet_bits) {
            auto fit = facet_bits->find(e.sample_id);
            if (fit == facet_bits->end()) continue;  // facet stage failed: row drops out
            for (int b : fit->second) lv.input.push_back(static_cast<double>(b));
        }
        lv.bits = it->second->bits;
        out.push_back(std::move(lv));
    }
    return out;
}

namespace {

struct AugmentationOutput {
    std::vector<std::pair<std::string, EmbeddingVec>> positive;
    std::vector<std::pair<std::string, EmbeddingVec>> negative;
    ErrorLedger ledger;
};

// Mimic over the training split. The series variant summarizes first
// (Train mode, labels in the prompt); the plain augmented variant feeds the
// raw text in the summary slot. Facet scores are merged into the prompt only
// when the flag asks for it.
AugmentationOutput run_augmentation(const EmbeddingsRunConfig& config, const Corpus& train,
                                    Gateway& gateway, const TemplateSet& templates,
                                    const FacetList& facets, StageStore& store) {
    AugmentationOutput out;
    std::vector<std::optional<AugmentedText>> rows(train.size());

    parallel_for(train.size(), config.workers, [&](std::size_t i) {
        const Sample& sample = train.samples[i];
        if (!sample.labels) return;

        if (const ordered_json* rec = store.find("mimic", sample.id)) {
            if (rec->value("ok", false)) {
                rows[i] = AugmentedText{sample.id, rec->at("positive").get<std::string>(),
                                        rec->at("negative").get<std::string>(), *sample.labels};
            }
            return;
        }

        SummaryRecord source;
        source.sample_id = sample.id;
        source.summary = sample.text;
        if (config.variant == EmbeddingsVariant::Picepr) {
            auto summary = run_summary(sample, PromptMode::Train, gateway, config.summary_backend,
                                       templates.summary, config.defaults);
            if (!summary.ok()) {
                ordered_json j;
                j["ok"] = false;
                j["failure"] = summary.outcome.failure.value_or("summary failed");
                store.append("mimic", sample.id, std::move(j));
                return;
            }
            source = std::move(*summary.value);
        }

        std::optional<std::string> facets_json;
        if (config.mimic_facets) {
            auto psycho = run_psycho(sample.id, sample.text, gateway, config.psycho_backend,
                                     facets, templates.psycho, config.defaults);
            if (!psycho.ok()) {
                ordered_json j;
                j["ok"] = false;
                j["failure"] = psycho.outcome.failure.value_or("psycho failed");
                store.append("mimic", sample.id, std::move(j));
                return;
            }
            facets_json = render_facets(facets, *psycho.value);
        }

        auto mimic = run_mimic(source, *sample.labels, gateway, config.mimic_backend,
                               templates.mimic_for(config.mimic_facets), config.defaults,
                               facets_json);
        ordered_json j;
        if (mimic.ok()) {
            j["ok"] = true;
            j["positive"] = mimic.value->positive_text;
            j["negative"] = mimic.value->negative_text;
            rows[i] = AugmentedText{sample.id, mimic.value->positive_text,
                                    mimic.value->negative_text, *sample.labels};
        } else {
            j["ok"] = false;
            j["failure"] = mimic.outcome.failure.value_or("mimic failed");
        }
        store.append("mimic", sample.id, std::move(j));
    });

    std::vector<std::size_t> surviving;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i]) {
            record_success(out.ledger);
            surviving.push_back(i);
        } else {
            record_failure(out.ledger);
        }
    }

    // Embed the augmented texts with the same vector backend.
    std::vector<std::pair<std::string, EmbeddingVec>> positive(surviving.size());
    std::vector<std::pair<std::string, EmbeddingVec>> negative(surviving.size());
    parallel_for(surviving.size(), config.workers, [&](std::size_t k) {
        const AugmentedText& row = *rows[surviving[k]];
        positive[k] = {row.sample_id,
                       gateway.embed(config.vector_backend, row.positive_text)};
        negative[k] = {row.sample_id,
                       gateway.embed(config.vector_backend, row.negative_text)};
    });
    out.positive = std::move(positive);
    out.negative = std::move(negative);
    return out;
}

std::map<std::string, std::vector<int>> run_facets(const EmbeddingsRunConfig& config,
                                                   const Corpus& corpus, Gateway& gateway,
                                                   const TemplateSet& templates,
                                                   const FacetList& facets, StageStore& store,
                                                   ErrorLedger& ledger) {
    std::vector<std::optional<std::vector<int>>> rows(corpus.size());
    parallel_for(corpus.size(), config.workers, [&](std::size_t i) {
        const Sample& sample = corpus.samples[i];
        if (const ordered_json* rec = store.find("psycho", sample.id)) {
            if (rec->value("ok", false)) rows[i] = rec->at("bits").get<std::vector<int>>();
            return;
        }
        auto result = run_psycho(sample.id, sample.text, gateway, config.psycho_backend, facets,
                                 templates.psycho, config.defaults);
        ordered_json j;
        if (result.ok()) {
            j["ok"] = true;
            j["bits"] = result.value->bits;
            rows[i] = result.value->bits;
        } else {
            j["ok"] = false;
            j["failure"] = result.outcome.failure.value_or("psycho failed");
        }
        store.append("psycho", sample.id, std::move(j));
    });
    std::map<std::string, std::vector<int>> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i]) {
            record_success(ledger);
            out[corpus.samples[i].id] = std::move(*rows[i]);
        } else {
            record_failure(ledger);
        }
    }
    return out;
}

}  // namespace

EmbeddingsRunResult run_embeddings(const EmbeddingsRunConfig& config, const Corpus& train,
                                   const Corpus& val, const Corpus& test, Gateway& gateway,
                                   const TemplateSet& templates, const FacetList& facets) {
    config.check();
    std::filesystem::create_directories(config.artifact_dir);

    if (auto manifest = RunManifest::read(config.artifact_dir)) {
        EmbeddingsRunResult result;
        result.reused_completed_run = true;
        result.ledger = manifest->ledger;
        result.predictions =
            load_predictions_jsonl(config.artifact_dir / "predictions.jsonl", test.schema);
        return result;
    }

    const std::string started = iso8601_now();
    const GatewayStats before = gateway.stats();
    StageStore store(config.artifact_dir);
    EmbeddingsRunResult result;

    auto train_emb = extract_embeddings(gateway, config.vector_backend, train, config.workers);
    auto val_emb = extract_embeddings(gateway, config.vector_backend, val, config.workers);
    auto test_emb = extract_embeddings(gateway, config.vector_backend, test, config.workers);
    save_embeddings_jsonl(train_emb, config.vector_backend,
                          config.artifact_dir / "embeddings_train.jsonl");
    save_embeddings_jsonl(val_emb, config.vector_backend,
                          config.artifact_dir / "embeddings_val.jsonl");
    save_embeddings_jsonl(test_emb, config.vector_backend,
                          config.artifact_dir / "embeddings_test.jsonl");

    // Optional contrastive fine-tuning of the projection, then freeze.
    Projection projection = Projection::identity(
        train_emb.empty() ? 1 : train_emb.front().vector.size());
    if (config.variant != EmbeddingsVariant::Regular) {
        std::vector<ContrastivePair> pairs;
        if (config.variant == EmbeddingsVariant::RegularTuned) {
            pairs = build_label_pairs(train_emb, train, config.margin, config.max_label_pairs);
        } else {
            auto augmented = run_augmentation(config, train, gateway, templates, facets, store);
            result.ledger += augmented.ledger;
            auto mimic_pairs =
                build_mimic_pairs(train_emb, augmented.positive, augmented.negative, config.margin);
            double frac = config.label_pair_fraction;
            std::size_t label_target =
                frac >= 1.0 ? config.max_label_pairs
                            : static_cast<std::size_t>(
                                  static_cast<double>(mimic_pairs.size()) * frac /
                                  std::max(1e-9, 1.0 - frac));
            auto label_pairs = build_label_pairs(train_emb, train, config.margin,
                                                 std::min(label_target, config.max_label_pairs));
            pairs = std::move(mimic_pairs);
            pairs.insert(pairs.end(), label_pairs.begin(), label_pairs.end());
        }
        if (!pairs.empty()) {
            projection = finetune_projection_contrastive(pairs, config.projection);
        }
        projection.save(config.artifact_dir / "projection.json");
    }

    // Facet features, when enabled, extend every split's inputs by 77 bits.
    std::map<std::string, std::vector<int>> facet_bits;
    const std::map<std::string, std::vector<int>>* facet_ptr = nullptr;
    if (config.use_facets) {
        for (const Corpus* part : {&train, &val, &test}) {
            auto bits = run_facets(config, *part, gateway, templates, facets, store, result.ledger);
            facet_bits.insert(bits.begin(), bits.end());
        }
        facet_ptr = &facet_bits;
    }

    const Projection* proj_ptr =
        config.variant == EmbeddingsVariant::Regular ? nullptr : &projection;
    auto train_rows = to_labeled_vectors(train_emb, train, proj_ptr, facet_ptr);
    auto val_rows = to_labeled_vectors(val_emb, val, proj_ptr, facet_ptr);
    if (train_rows.empty()) throw Error("EmptyDataset", "no labeled training embeddings");

    MlpConfig mlp_config;
    mlp_config.input_dim = train_rows.front().input.size();
    mlp_config.hidden = config.hidden;
    mlp_config.output_dim = PersonalitySchema::of(train.schema).size();
    mlp_config.seed = config.seed;

    TrainConfig train_config;
    train_config.loss = config.loss;
    train_config.learning_rate = config.learning_rate;
    train_config.epochs = config.epochs;
    train_config.batch_size = config.batch_size;
    train_config.seed = config.seed;

    TrainOutcome outcome = train_head(train_rows, val_rows, mlp_config, train_config);
    outcome.params.save(config.artifact_dir / "head.json");

    for (const auto& e : test_emb) {
        LabeledVector row;
        row.input = proj_ptr ? proj_ptr->apply(e.vector) : e.vector;
        if (facet_ptr) {
            auto fit = facet_ptr->find(e.sample_id);
            if (fit == facet_ptr->end()) continue;
            for (int b : fit->second) row.input.push_back(static_cast<double>(b));
        }
        auto fwd = mlp_forward(outcome.params, row.input);
        std::vector<int> bits(fwd.probs.size());
        for (std::size_t d = 0; d < fwd.probs.size(); ++d) bits[d] = fwd.probs[d] >= 0.5 ? 1 : 0;
        result.predictions.push_back({e.sample_id, LabelVector{test.schema, std::move(bits)}});
    }
    save_predictions_jsonl(result.predictions, config.artifact_dir / "predictions.jsonl",
                           test.schema);

    bool labeled = !test.samples.empty();
    for (const auto& s : test.samples) labeled = labeled && s.labels.has_value();
    if (labeled && !result.predictions.empty()) {
        EvalReport report = evaluate_predictions(result.predictions, test);
        double total_ba = 0.0;
        for (const auto& d : report.dimensions) total_ba += d.m.ba;
        result.test_mean_ba = total_ba / static_cast<double>(report.dimensions.size());
        std::ofstream json_out(config.artifact_dir / "report.json", std::ios::trunc);
        json_out << report_to_json(report).dump(2) << "\n";
        std::ofstream text_out(config.artifact_dir / "report.txt", std::ios::trunc);
        text_out << report_to_text(report);

        // Normalized embedding-distance heatmap data over the observed label
        // patterns of the test split.
        std::map<std::string, const LabelVector*> truth_by_id;
        for (const auto& s : test.samples) truth_by_id[s.id] = &*s.labels;
        std::vector<std::pair<EmbeddingVec, LabelVector>> labeled_embeddings;
        for (const auto& e : test_emb) {
            auto it = truth_by_id.find(e.sample_id);
            if (it == truth_by_id.end()) continue;
            labeled_embeddings.push_back(
                {proj_ptr ? proj_ptr->apply(e.vector) : e.vector, *it->second});
        }
        try {
            PatternDistanceMatrix matrix = label_pattern_distance_matrix(labeled_embeddings);
            ordered_json mj;
            mj["patterns"] = matrix.patterns;
            mj["normalized_distances"] = matrix.normalized;
            std::ofstream matrix_out(config.artifact_dir / "distance_matrix.json",
                                     std::ios::trunc);
            matrix_out << mj.dump(2) << "\n";
        } catch (const Error&) {
            // Fewer than two label patterns: nothing to plot.
        }
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
    manifest.command = "run-embeddings";
    manifest.variant = embeddings_variant_name(config.variant);
    manifest.config = {{"vector_backend", config.vector_backend},
                       {"summary_backend", config.summary_backend},
                       {"mimic_backend", config.mimic_backend},
                       {"use_facets", config.use_facets},
                       {"chained", "projection-then-head"}};
    manifest.seed = config.seed;
    manifest.ledger = result.ledger;
    manifest.usage_per_backend = result.usage;
    manifest.started_at = started;
    manifest.finished_at = iso8601_now();
    manifest.write(config.artifact_dir);
    return result;
}

}  // namespace picepr
