#include "picepr/components.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace picepr {

namespace {

ResponseFormat format_for(const BackendDescriptor& backend) {
    switch (backend.output_structure) {
        case OutputStructure::Schema: return ResponseFormat::JsonSchema;
        case OutputStructure::Mode: return ResponseFormat::JsonMode;
        case OutputStructure::Text: return ResponseFormat::FreeText;
    }
    return ResponseFormat::FreeText;
}

ChatRequest make_request(const BackendDescriptor& backend, std::string system, std::string user,
                         const OutputSchema& schema, const RequestDefaults& defaults) {
    ChatRequest req;
    req.backend = backend.name;
    req.messages.push_back({Role::System, std::move(system)});
    req.messages.push_back({Role::User, std::move(user)});
    req.response_format = format_for(backend);
    if (req.response_format == ResponseFormat::JsonSchema) req.schema = schema;
    req.temperature = defaults.temperature;
    req.max_output_tokens = defaults.max_output_tokens;
    return req;
}

// Runs one completion and parses it; transport-level errors surface as
// Failed outcomes so a bad sample never aborts a whole run.
ParseOutcome complete_and_parse(Gateway& gateway, const ChatRequest& request,
                                const OutputSchema& schema) {
    try {
        ChatResponse resp = gateway.complete(request);
        return parse_with_repair(resp.content, schema);
    } catch (const GatewayError& e) {
        ParseOutcome out;
        out.status = ParseStatus::Failed;
        out.failure = e.code() + ": " + e.what();
        return out;
    }
}

}  // namespace

std::string classify_label_key(const Dimension& dim) {
    std::string key;
    for (char c : dim.code) {
        if (c != '/') key.push_back(c);
    }
    return key;
}

std::string pole_letter(const Dimension& dim, int bit) {
    // MBTI codes are "X/Y" with X the 0-pole letter and Y the 1-pole letter.
    return std::string(1, bit ? dim.code[2] : dim.code[0]);
}

OutputSchema summary_output_schema() {
    return OutputSchema{{
        {"analysis", FieldKind::Text, {}, {}},
        {"summary", FieldKind::Text, {}, {}},
    }};
}

OutputSchema psycho_output_schema(const FacetList& facets) {
    return OutputSchema{{
        {"analysis", FieldKind::Text, {}, {}},
        {"facets", FieldKind::BitMap, {}, facets.names()},
    }};
}

OutputSchema classify_output_schema(SchemaKind schema) {
    OutputSchema out;
    out.fields.push_back({"analysis", FieldKind::Text, {}, {}});
    for (const auto& dim : PersonalitySchema::of(schema).dimensions) {
        if (schema == SchemaKind::BigFive) {
            out.fields.push_back({classify_label_key(dim), FieldKind::BinaryBit, {}, {}});
        } else {
            out.fields.push_back({classify_label_key(dim),
                                  FieldKind::PoleLetter,
                                  {pole_letter(dim, 0), pole_letter(dim, 1)},
                                  {}});
        }
    }
    return out;
}

OutputSchema mimic_output_schema() {
    return OutputSchema{{
        {"positive", FieldKind::Text, {}, {}},
        {"negative", FieldKind::Text, {}, {}},
    }};
}

std::string render_labels(const LabelVector& labels) {
    const auto& schema = PersonalitySchema::of(labels.schema);
    std::string out;
    for (std::size_t d = 0; d < schema.size(); ++d) {
        const Dimension& dim = schema.dimensions[d];
        if (labels.schema == SchemaKind::BigFive) {
            out += dim.positive_pole + " (" + dim.code + "): " + std::to_string(labels.bits[d]);
        } else {
            out += dim.negative_pole + "/" + dim.positive_pole + " (" + dim.code +
                   "): " + pole_letter(dim, labels.bits[d]);
        }
        if (d + 1 < schema.size()) out += "\n";
    }
    return out;
}

std::string render_facets(const FacetList& facets, const FacetVector& vec) {
    ordered_json j;
    for (std::size_t i = 0; i < facets.size(); ++i) {
        j[facets.at(i)] = vec.bits.at(i);
    }
    return j.dump();
}

std::string render_classify_answer(const std::string& analysis, const LabelVector& labels) {
    const auto& schema = PersonalitySchema::of(labels.schema);
    ordered_json j;
    j["analysis"] = analysis;
    for (std::size_t d = 0; d < schema.size(); ++d) {
        const Dimension& dim = schema.dimensions[d];
        if (labels.schema == SchemaKind::BigFive) {
            j[classify_label_key(dim)] = labels.bits[d];
        } else {
            j[classify_label_key(dim)] = pole_letter(dim, labels.bits[d]);
        }
    }
    return j.dump();
}

LabelVector labels_from_classify_doc(const ordered_json& doc, SchemaKind schema) {
    const auto& dims = PersonalitySchema::of(schema).dimensions;
    std::vector<int> bits;
    bits.reserve(dims.size());
    for (const auto& dim : dims) {
        const auto& v = doc.at(classify_label_key(dim));
        if (schema == SchemaKind::BigFive) {
            bits.push_back(v.get<int>());
        } else {
            bits.push_back(v.get<std::string>() == pole_letter(dim, 1) ? 1 : 0);
        }
    }
    return LabelVector{schema, std::move(bits)};
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    TemplateSet set{
        PromptTemplate::load(dir / "summary.tmpl", {"user_text", "labels"}),
        PromptTemplate::load(dir / "psycho.tmpl", {"user_text", "personality_facets"}),
        PromptTemplate::load(dir / "classify_big5.tmpl", {"summary", "personality_facets"}),
        PromptTemplate::load(dir / "classify_mbti.tmpl", {"summary", "personality_facets"}),
        PromptTemplate::load(dir / "classify_raw_big5.tmpl", {"user_text"}),
        PromptTemplate::load(dir / "classify_raw_mbti.tmpl", {"user_text"}),
        PromptTemplate::load(dir / "mimic.tmpl", {"summary", "labels", "personality_facets"}),
        std::nullopt,
    };
    if (std::filesystem::exists(dir / "mimic_facets.tmpl")) {
        set.mimic_facets = PromptTemplate::load(dir / "mimic_facets.tmpl",
                                                {"summary", "labels", "personality_facets"});
    }
    return set;
}

const PromptTemplate& TemplateSet::classify_for(SchemaKind schema, bool raw) const {
    if (raw) return schema == SchemaKind::BigFive ? classify_raw_big5 : classify_raw_mbti;
    return schema == SchemaKind::BigFive ? classify_big5 : classify_mbti;
}

const PromptTemplate& TemplateSet::mimic_for(bool with_facets) const {
    return with_facets && mimic_facets ? *mimic_facets : mimic;
}

ChatRequest build_summary_prompt(const Sample& sample, PromptMode mode, const PromptTemplate& tmpl,
                                 const BackendDescriptor& backend,
                                 const RequestDefaults& defaults) {
    std::map<std::string, std::string> values{{"user_text", sample.text}};
    if (mode == PromptMode::Train) {
        if (!sample.labels) {
            throw Error("MissingLabels",
                        "Train-mode summary needs labels for sample '" + sample.id + "'");
        }
        values["labels"] = render_labels(*sample.labels);
    }
    return make_request(backend, render_template_text(tmpl.system, mode, values),
                        render_template_text(tmpl.user, mode, values), summary_output_schema(),
                        defaults);
}

ChatRequest build_psycho_prompt(const std::string& sample_text, const FacetList& facets,
                                const PromptTemplate& tmpl, const BackendDescriptor& backend,
                                const RequestDefaults& defaults) {
    std::string facet_names;
    for (std::size_t i = 0; i < facets.size(); ++i) {
        facet_names += facets.at(i);
        if (i + 1 < facets.size()) facet_names += "\n";
    }
    std::map<std::string, std::string> values{{"user_text", sample_text},
                                              {"personality_facets", facet_names}};
    return make_request(backend, render_template_text(tmpl.system, PromptMode::Infer, values),
                        render_template_text(tmpl.user, PromptMode::Infer, values),
                        psycho_output_schema(facets), defaults);
}

ClassifyInput ClassifyInput::raw(SchemaKind schema, const Sample& sample) {
    ClassifyInput in;
    in.schema = schema;
    in.sample_id = sample.id;
    in.raw_text = sample.text;
    return in;
}

ClassifyInput ClassifyInput::series(SchemaKind schema, const SummaryRecord& summary,
                                    const FacetList& facets, const FacetVector& facet_vec) {
    ClassifyInput in;
    in.schema = schema;
    in.sample_id = summary.sample_id;
    in.summary = summary.summary;
    in.facets_json = render_facets(facets, facet_vec);
    return in;
}

ChatRequest build_classify_prompt(const ClassifyInput& input, int shots,
                                  const std::vector<ClassifyExemplar>& exemplars,
                                  const TemplateSet& templates, const BackendDescriptor& backend,
                                  const RequestDefaults& defaults) {
    if (shots != 0 && shots != 2) {
        throw Error("MissingExemplars", "shots must be 0 or 2");
    }
    if (shots == 2 && exemplars.size() != 2) {
        throw Error("MissingExemplars", "two-shot prompting needs exactly two exemplars");
    }
    const bool raw = input.raw_text.has_value();
    const PromptTemplate& tmpl = templates.classify_for(input.schema, raw);

    std::map<std::string, std::string> values;
    if (raw) {
        values["user_text"] = *input.raw_text;
    } else {
        values["summary"] = input.summary.value_or("");
        values["personality_facets"] = input.facets_json.value_or("{}");
    }

    ChatRequest req = make_request(backend, render_template_text(tmpl.system, PromptMode::Infer, values),
                                   render_template_text(tmpl.user, PromptMode::Infer, values),
                                   classify_output_schema(input.schema), defaults);
    if (shots == 2) {
        // Exemplar exchanges slot in between the system message and the
        // target user message.
        std::vector<ChatMessage> messages;
        messages.push_back(req.messages.front());
        for (const auto& ex : exemplars) {
            messages.push_back({Role::User, ex.user_content});
            messages.push_back({Role::Assistant, ex.assistant_content});
        }
        messages.push_back(req.messages.back());
        req.messages = std::move(messages);
    }
    return req;
}

ChatRequest build_mimic_prompt(const SummaryRecord& summary, const LabelVector& labels,
                               const PromptTemplate& tmpl, const BackendDescriptor& backend,
                               const RequestDefaults& defaults,
                               const std::optional<std::string>& facets_json) {
    std::map<std::string, std::string> values{{"summary", summary.summary},
                                              {"labels", render_labels(labels)},
                                              {"personality_facets", facets_json.value_or("{}")}};
    return make_request(backend, render_template_text(tmpl.system, PromptMode::Infer, values),
                        render_template_text(tmpl.user, PromptMode::Infer, values),
                        mimic_output_schema(), defaults);
}

StageResult<SummaryRecord> run_summary(const Sample& sample, PromptMode mode, Gateway& gateway,
                                       const std::string& backend_name, const PromptTemplate& tmpl,
                                       const RequestDefaults& defaults) {
    ChatRequest req =
        build_summary_prompt(sample, mode, tmpl, gateway.descriptor(backend_name), defaults);
    StageResult<SummaryRecord> result;
    result.outcome = complete_and_parse(gateway, req, summary_output_schema());
    if (result.outcome.ok()) {
        SummaryRecord rec;
        rec.sample_id = sample.id;
        rec.evidence = result.outcome.value->at("analysis").get<std::string>();
        rec.summary = result.outcome.value->at("summary").get<std::string>();
        if (mode == PromptMode::Train) rec.echoed_labels = sample.labels;
        result.value = std::move(rec);
    }
    return result;
}

StageResult<FacetVector> run_psycho(const std::string& sample_id, const std::string& sample_text,
                                    Gateway& gateway, const std::string& backend_name,
                                    const FacetList& facets, const PromptTemplate& tmpl,
                                    const RequestDefaults& defaults) {
    ChatRequest req =
        build_psycho_prompt(sample_text, facets, tmpl, gateway.descriptor(backend_name), defaults);
    StageResult<FacetVector> result;
    result.outcome = complete_and_parse(gateway, req, psycho_output_schema(facets));
    if (result.outcome.ok()) {
        FacetVector vec;
        vec.sample_id = sample_id;
        const auto& facet_doc = result.outcome.value->at("facets");
        vec.bits.reserve(facets.size());
        for (std::size_t i = 0; i < facets.size(); ++i) {
            vec.bits.push_back(facet_doc.at(facets.at(i)).get<int>());
        }
        result.value = std::move(vec);
    }
    return result;
}

StageResult<ClassifyRecord> run_classify(const ClassifyInput& input, int shots,
                                         const std::vector<ClassifyExemplar>& exemplars,
                                         Gateway& gateway, const std::string& backend_name,
                                         const TemplateSet& templates,
                                         const RequestDefaults& defaults) {
    ChatRequest req = build_classify_prompt(input, shots, exemplars, templates,
                                            gateway.descriptor(backend_name), defaults);
    StageResult<ClassifyRecord> result;
    result.outcome = complete_and_parse(gateway, req, classify_output_schema(input.schema));
    if (result.outcome.ok()) {
        ClassifyRecord rec;
        rec.sample_id = input.sample_id;
        rec.analysis = result.outcome.value->at("analysis").get<std::string>();
        rec.labels = labels_from_classify_doc(*result.outcome.value, input.schema);
        result.value = std::move(rec);
    }
    return result;
}

StageResult<MimicRecord> run_mimic(const SummaryRecord& summary, const LabelVector& labels,
                                   Gateway& gateway, const std::string& backend_name,
                                   const PromptTemplate& tmpl, const RequestDefaults& defaults,
                                   const std::optional<std::string>& facets_json) {
    ChatRequest req = build_mimic_prompt(summary, labels, tmpl, gateway.descriptor(backend_name),
                                         defaults, facets_json);
    StageResult<MimicRecord> result;
    result.outcome = complete_and_parse(gateway, req, mimic_output_schema());
    if (!result.outcome.ok()) return result;

    std::string positive = result.outcome.value->at("positive").get<std::string>();
    std::string negative = result.outcome.value->at("negative").get<std::string>();
    if (positive == negative) {
        result.outcome.status = ParseStatus::Failed;
        result.outcome.failure = "InvariantViolation: positive and negative texts are identical";
        result.outcome.value.reset();
        return result;
    }
    MimicRecord rec;
    rec.sample_id = summary.sample_id;
    rec.positive_text = std::move(positive);
    rec.negative_text = std::move(negative);
    rec.source_labels = labels;
    result.value = std::move(rec);
    return result;
}

std::vector<ClassifyExemplar> pick_two_shot_exemplars(const Corpus& train) {
    if (train.samples.size() < 2) {
        throw Error("MissingExemplars", "two-shot prompting needs at least two training samples");
    }
    const Sample& first = train.samples.front();
    if (!first.labels) throw Error("MissingLabels", "exemplar sample lacks labels");

    std::size_t best = 1;
    int best_distance = -1;
    for (std::size_t i = 1; i < train.samples.size(); ++i) {
        const auto& labels = train.samples[i].labels;
        if (!labels) throw Error("MissingLabels", "exemplar sample lacks labels");
        int dist = 0;
        for (std::size_t d = 0; d < labels->bits.size(); ++d) {
            dist += labels->bits[d] != first.labels->bits[d];
        }
        if (dist > best_distance) {
            best_distance = dist;
            best = i;
        }
    }

    auto to_exemplar = [](const Sample& s) {
        ClassifyExemplar ex;
        ex.user_content = s.text;
        ex.assistant_content = render_classify_answer(
            "The text's observable cues line up with the labels below.", *s.labels);
        return ex;
    };
    return {to_exemplar(first), to_exemplar(train.samples[best])};
}

std::vector<ChatExchange> build_finetune_corpus(const std::vector<SummaryRecord>& records,
                                                const Corpus& corpus,
                                                const std::string& system_prompt) {
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : corpus.samples) by_id[s.id] = &s;

    std::vector<ChatExchange> exchanges;
    exchanges.reserve(records.size());
    for (const auto& rec : records) {
        if (!rec.echoed_labels) {
            throw Error("MissingLabels",
                        "fine-tune corpus needs Train-mode records; '" + rec.sample_id +
                            "' has no labels");
        }
        auto it = by_id.find(rec.sample_id);
        if (it == by_id.end()) {
            throw Error("Misalignment", "summary record '" + rec.sample_id + "' not in corpus");
        }
        ChatExchange ex;
        ex.system = system_prompt;
        ex.user = it->second->text;
        ex.assistant = render_classify_answer(rec.evidence, *rec.echoed_labels);
        exchanges.push_back(std::move(ex));
    }
    return exchanges;
}

void save_finetune_jsonl(const std::vector<ChatExchange>& exchanges,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open for writing: " + path.string());
    for (const auto& ex : exchanges) {
        ordered_json j;
        j["messages"] = ordered_json::array({
            ordered_json{{"role", "system"}, {"content", ex.system}},
            ordered_json{{"role", "user"}, {"content", ex.user}},
            ordered_json{{"role", "assistant"}, {"content", ex.assistant}},
        });
        out << j.dump() << "\n";
    }
}

}  // namespace picepr
