#include <doctest.h>

#include "picepr/components.hpp"
#include "picepr/mock.hpp"
#include "test_support.hpp"

using namespace picepr;
using picepr::testing::TempDir;
using picepr::testing::write_file;

namespace {

struct Rig {
    Gateway gateway;
    FacetList facets = FacetList::placeholder();
    TemplateSet templates = TemplateSet::load(testing::templates_dir());

    Rig() {
        auto reg = [this](const std::string& name, MockTransport::ContentFn fn) {
            auto mock = std::make_shared<MockTransport>();
            mock->set_generator(std::move(fn));
            BackendDescriptor d;
            d.name = name;
            d.kind = BackendKind::Completions;
            d.output_structure = OutputStructure::Schema;
            d.endpoint = "mock://" + name;
            d.model_id = name;
            gateway.register_backend(d, mock);
            return mock;
        };
        summary_mock = reg("summary", scripted_summary_generator());
        psycho_mock = reg("psycho", scripted_psycho_generator(facets));
        classify_mock = reg("classify", scripted_classify_generator(SchemaKind::BigFive));
        mimic_mock = reg("mimic", scripted_mimic_generator());
    }

    std::shared_ptr<MockTransport> summary_mock, psycho_mock, classify_mock, mimic_mock;
};

Sample labeled_sample() {
    Sample s;
    s.id = "s1";
    s.text = "I spent the weekend reorganizing my bookshelf and planning the month ahead.";
    s.labels = LabelVector{SchemaKind::BigFive, {1, 1, 0, 1, 0}};
    return s;
}

}  // namespace

TEST_CASE("summary prompt gating: labels appear in Train and never in Infer") {
    Rig rig;
    Sample s = labeled_sample();

    ChatRequest train = build_summary_prompt(s, PromptMode::Train, rig.templates.summary,
                                             rig.gateway.descriptor("summary"));
    std::string train_text = train.messages[0].content + "\n" + train.messages[1].content;
    CHECK(train_text.find("Openness (O): 1") != std::string::npos);
    CHECK(train_text.find("Known personality labels") != std::string::npos);
    CHECK(train_text.find(s.text) != std::string::npos);
    CHECK(train_text.find("<<gated") == std::string::npos);

    ChatRequest infer = build_summary_prompt(s, PromptMode::Infer, rig.templates.summary,
                                             rig.gateway.descriptor("summary"));
    std::string infer_text = infer.messages[0].content + "\n" + infer.messages[1].content;
    CHECK(infer_text.find("Known personality labels") == std::string::npos);
    CHECK(infer_text.find("Openness (O)") == std::string::npos);
    CHECK(infer_text.find(s.text) != std::string::npos);
}

TEST_CASE("Train-mode summary prompt without labels raises MissingLabels") {
    Rig rig;
    Sample s = labeled_sample();
    s.labels.reset();
    CHECK_THROWS_WITH_AS(build_summary_prompt(s, PromptMode::Train, rig.templates.summary,
                                              rig.gateway.descriptor("summary")),
                         doctest::Contains("MissingLabels"), Error);
}

TEST_CASE("label-leak freedom: sentinel-labeled samples leave no trace in Infer prompts") {
    // A template whose gated block carries a sentinel that exists nowhere
    // else; rendered labels also carry dimension names as sentinels.
    auto tmpl = PromptTemplate::from_strings(
        "probe", "sys <<gated:g>>SENTINEL_BLOCK {labels}<</gated>> tail", "user: {user_text}",
        {"user_text", "labels"});
    Rig rig;
    Sample s = labeled_sample();

    ChatRequest train =
        build_summary_prompt(s, PromptMode::Train, tmpl, rig.gateway.descriptor("summary"));
    CHECK(train.messages[0].content.find("SENTINEL_BLOCK") != std::string::npos);
    CHECK(train.messages[0].content.find("Conscientiousness") != std::string::npos);

    ChatRequest infer =
        build_summary_prompt(s, PromptMode::Infer, tmpl, rig.gateway.descriptor("summary"));
    for (const auto& msg : infer.messages) {
        CHECK(msg.content.find("SENTINEL_BLOCK") == std::string::npos);
        CHECK(msg.content.find("Conscientiousness") == std::string::npos);
        CHECK(msg.content.find("Openness") == std::string::npos);
    }
}

TEST_CASE("template loading rejects undeclared placeholders and bad gating") {
    TempDir dir("tmpl");
    write_file(dir.path / "bad.tmpl", "[system]\nuses {unknown_slot}\n[user]\n{user_text}\n");
    CHECK_THROWS_WITH_AS(PromptTemplate::load(dir.path / "bad.tmpl", {"user_text"}),
                         doctest::Contains("UndeclaredPlaceholder"), TemplateError);

    write_file(dir.path / "unclosed.tmpl", "[system]\n<<gated:x>> no close\n[user]\nu\n");
    CHECK_THROWS_AS(PromptTemplate::load(dir.path / "unclosed.tmpl", {}), TemplateError);

    CHECK_THROWS_WITH_AS(
        render_template_text("hello {labels}", PromptMode::Train, {}),
        doctest::Contains("UnboundPlaceholder"), TemplateError);
}

TEST_CASE("placeholder scanning ignores JSON braces in template text") {
    auto found = scan_placeholders(R"(respond {"analysis": "...", "O": 0|1} with {user_text})");
    CHECK(found == std::set<std::string>{"user_text"});
}

TEST_CASE("run_psycho accepts exactly the configured facet map") {
    Rig rig;
    SUBCASE("scripted 77-key output is accepted") {
        auto result = run_psycho("s1", "some text", rig.gateway, "psycho", rig.facets,
                                 rig.templates.psycho);
        REQUIRE(result.ok());
        CHECK(result.value->bits.size() == kFacetCount);
        for (int b : result.value->bits) CHECK((b == 0 || b == 1));
    }
    SUBCASE("76 keys fail validation") {
        rig.psycho_mock->set_generator([&](const ChatRequest&) {
            ordered_json facets_doc;
            for (std::size_t i = 0; i + 1 < kFacetCount; ++i) facets_doc[rig.facets.at(i)] = 1;
            ordered_json j;
            j["analysis"] = "a";
            j["facets"] = facets_doc;
            return j.dump();
        });
        auto result = run_psycho("s1", "text", rig.gateway, "psycho", rig.facets,
                                 rig.templates.psycho);
        CHECK_FALSE(result.ok());
        CHECK(result.outcome.status == ParseStatus::Failed);
    }
    SUBCASE("a 'yes' facet value fails the bit domain") {
        rig.psycho_mock->set_generator([&](const ChatRequest&) {
            ordered_json facets_doc;
            for (std::size_t i = 0; i < kFacetCount; ++i) facets_doc[rig.facets.at(i)] = 1;
            facets_doc[rig.facets.at(3)] = "yes";
            ordered_json j;
            j["analysis"] = "a";
            j["facets"] = facets_doc;
            return j.dump();
        });
        auto result = run_psycho("s1", "text", rig.gateway, "psycho", rig.facets,
                                 rig.templates.psycho);
        CHECK_FALSE(result.ok());
        REQUIRE(result.outcome.failure.has_value());
        CHECK(result.outcome.failure->find("InvalidValue") != std::string::npos);
    }
}

TEST_CASE("classify prompt variants") {
    Rig rig;
    Sample s = labeled_sample();
    SummaryRecord summary{"s1", "A tidy, plan-ahead personality.", "evidence", std::nullopt};
    FacetVector fv;
    fv.sample_id = "s1";
    fv.bits.assign(kFacetCount, 1);

    SUBCASE("series input carries the summary and all 77 facet entries") {
        ClassifyInput input = ClassifyInput::series(SchemaKind::BigFive, summary, rig.facets, fv);
        ChatRequest req = build_classify_prompt(input, 0, {}, rig.templates,
                                                rig.gateway.descriptor("classify"));
        const std::string& user = req.messages.back().content;
        CHECK(user.find(summary.summary) != std::string::npos);
        for (std::size_t i = 0; i < kFacetCount; ++i) {
            CHECK(user.find("\"" + rig.facets.at(i) + "\"") != std::string::npos);
        }
        CHECK(user.find(s.text) == std::string::npos);
    }
    SUBCASE("raw input carries the original text and no facet keys") {
        ClassifyInput input = ClassifyInput::raw(SchemaKind::BigFive, s);
        ChatRequest req = build_classify_prompt(input, 0, {}, rig.templates,
                                                rig.gateway.descriptor("classify"));
        const std::string& user = req.messages.back().content;
        CHECK(user.find(s.text) != std::string::npos);
        for (std::size_t i = 0; i < kFacetCount; ++i) {
            CHECK(user.find(rig.facets.at(i)) == std::string::npos);
        }
    }
    SUBCASE("two-shot prepends exactly four messages") {
        ClassifyInput input = ClassifyInput::raw(SchemaKind::BigFive, s);
        ChatRequest zero = build_classify_prompt(input, 0, {}, rig.templates,
                                                 rig.gateway.descriptor("classify"));
        std::vector<ClassifyExemplar> exemplars = {
            {"example one", R"({"analysis": "a", "O": 1, "C": 0, "E": 0, "A": 0, "N": 0})"},
            {"example two", R"({"analysis": "b", "O": 0, "C": 1, "E": 1, "A": 1, "N": 1})"},
        };
        ChatRequest two = build_classify_prompt(input, 2, exemplars, rig.templates,
                                                rig.gateway.descriptor("classify"));
        CHECK(two.messages.size() == zero.messages.size() + 4);
        CHECK(two.messages[1].role == Role::User);
        CHECK(two.messages[2].role == Role::Assistant);
        CHECK(two.messages[3].role == Role::User);
        CHECK(two.messages[4].role == Role::Assistant);
        CHECK(two.messages.front().role == Role::System);
        CHECK(two.messages.back().content == zero.messages.back().content);
    }
    SUBCASE("two shots require exactly two exemplars") {
        ClassifyInput input = ClassifyInput::raw(SchemaKind::BigFive, s);
        CHECK_THROWS_WITH_AS(build_classify_prompt(input, 2, {}, rig.templates,
                                                   rig.gateway.descriptor("classify")),
                             doctest::Contains("MissingExemplars"), Error);
    }
}

TEST_CASE("classify output schema keeps analysis ahead of the label keys") {
    for (SchemaKind kind : {SchemaKind::BigFive, SchemaKind::Mbti}) {
        OutputSchema schema = classify_output_schema(kind);
        REQUIRE_FALSE(schema.fields.empty());
        CHECK(schema.fields.front().key == "analysis");
        CHECK(schema.fields.size() == PersonalitySchema::of(kind).size() + 1);
    }
    // The scripted mock emits in declared order too.
    auto gen = scripted_classify_generator(SchemaKind::BigFive);
    ChatRequest req;
    req.messages = {{Role::User, "sample"}};
    std::string raw = gen(req);
    CHECK(raw.find("\"analysis\"") < raw.find("\"O\""));
}

TEST_CASE("mbti classify letters decode through the pole mapping") {
    Rig rig;
    auto mbti_mock = std::make_shared<MockTransport>();
    mbti_mock->set_generator(scripted_classify_generator(SchemaKind::Mbti));
    BackendDescriptor d;
    d.name = "classify-mbti";
    d.kind = BackendKind::Completions;
    d.output_structure = OutputStructure::Schema;
    d.endpoint = "mock://classify?schema=mbti";
    d.model_id = "m";
    rig.gateway.register_backend(d, mbti_mock);

    Sample s;
    s.id = "m1";
    s.text = "Weekly plans and spreadsheets. [pattern=1100]";
    ClassifyInput input = ClassifyInput::raw(SchemaKind::Mbti, s);
    auto result = run_classify(input, 0, {}, rig.gateway, "classify-mbti", rig.templates);
    REQUIRE(result.ok());
    CHECK(result.value->labels.bits == std::vector<int>{1, 1, 0, 0});
    CHECK_FALSE(result.value->analysis.empty());
}

TEST_CASE("mimic requires distinct positive and negative texts") {
    Rig rig;
    SummaryRecord summary{"s1", "profile text", "evidence", std::nullopt};
    LabelVector labels{SchemaKind::BigFive, {1, 0, 1, 0, 1}};

    SUBCASE("scripted mimic produces a valid record") {
        auto result = run_mimic(summary, labels, rig.gateway, "mimic", rig.templates.mimic);
        REQUIRE(result.ok());
        CHECK(result.value->positive_text != result.value->negative_text);
        CHECK(result.value->source_labels == labels);
    }
    SUBCASE("identical texts violate the invariant") {
        rig.mimic_mock->set_generator([](const ChatRequest&) {
            return std::string(R"({"positive": "same post", "negative": "same post"})");
        });
        auto result = run_mimic(summary, labels, rig.gateway, "mimic", rig.templates.mimic);
        CHECK_FALSE(result.ok());
        REQUIRE(result.outcome.failure.has_value());
        CHECK(result.outcome.failure->find("InvariantViolation") != std::string::npos);
    }
}

TEST_CASE("two-shot exemplar picking prefers complementary label patterns") {
    Corpus train{SchemaKind::BigFive, {}};
    auto add = [&](const std::string& id, std::vector<int> bits) {
        train.samples.push_back({id, "text for " + id, LabelVector{SchemaKind::BigFive, bits}});
    };
    add("a", {1, 1, 0, 0, 1});
    add("b", {1, 1, 0, 0, 0});  // distance 1
    add("c", {0, 0, 1, 1, 0});  // distance 5: full complement
    add("d", {0, 0, 1, 1, 0});

    auto exemplars = pick_two_shot_exemplars(train);
    REQUIRE(exemplars.size() == 2);
    CHECK(exemplars[0].user_content == "text for a");
    CHECK(exemplars[1].user_content == "text for c");  // earliest max-distance wins
    CHECK(exemplars[1].assistant_content.find("\"analysis\"") != std::string::npos);
}

TEST_CASE("fine-tune corpus combines evidence with the label block") {
    Corpus corpus{SchemaKind::BigFive, {}};
    corpus.samples.push_back(
        {"s1", "original user text one", LabelVector{SchemaKind::BigFive, {0, 1, 0, 1, 0}}});
    corpus.samples.push_back(
        {"s2", "original user text two", LabelVector{SchemaKind::BigFive, {1, 0, 0, 0, 1}}});

    std::vector<SummaryRecord> records;
    records.push_back({"s1", "summary one", "evidence token EV_ONE",
                       LabelVector{SchemaKind::BigFive, {0, 1, 0, 1, 0}}});
    records.push_back({"s2", "summary two", "evidence token EV_TWO",
                       LabelVector{SchemaKind::BigFive, {1, 0, 0, 0, 1}}});

    auto exchanges = build_finetune_corpus(records, corpus, "system prompt");
    REQUIRE(exchanges.size() == 2);  // order-preserving, one per record
    CHECK(exchanges[0].user == "original user text one");
    CHECK(exchanges[0].system == "system prompt");
    CHECK(exchanges[0].assistant.find("evidence token EV_ONE") != std::string::npos);
    CHECK(exchanges[1].assistant.find("evidence token EV_TWO") != std::string::npos);
    auto doc = ordered_json::parse(exchanges[0].assistant);
    CHECK(doc.at("analysis") == "evidence token EV_ONE");
    CHECK(doc.at("C") == 1);
    CHECK(doc.at("O") == 0);
    CHECK(exchanges[0].assistant.find("\"analysis\"") <
          exchanges[0].assistant.find("\"O\""));

    SUBCASE("serialized JSONL holds three-message exchanges") {
        TempDir dir("finetune");
        auto path = dir.path / "ft.jsonl";
        save_finetune_jsonl(exchanges, path);
        std::ifstream in(path);
        std::string line;
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            auto j = ordered_json::parse(line);
            CHECK(j.at("messages").size() == 3);
            CHECK(j.at("messages")[0].at("role") == "system");
            CHECK(j.at("messages")[1].at("role") == "user");
            CHECK(j.at("messages")[2].at("role") == "assistant");
            ++rows;
        }
        CHECK(rows == 2);
    }

    SUBCASE("empty input yields an empty corpus") {
        CHECK(build_finetune_corpus({}, corpus, "sys").empty());
    }

    SUBCASE("records without labels are rejected") {
        records[0].echoed_labels.reset();
        CHECK_THROWS_WITH_AS(build_finetune_corpus(records, corpus, "sys"),
                             doctest::Contains("MissingLabels"), Error);
    }
}
