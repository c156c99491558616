#include <doctest.h>

#include <fstream>
#include <mutex>

#include "picepr/embeddings.hpp"
#include "pipeline_rig.hpp"

using namespace picepr;
using picepr::testing::TempDir;
using picepr::testing::make_pipeline_rig;

namespace {

EmbeddingsRunConfig base_config(const std::filesystem::path& dir, EmbeddingsVariant variant) {
    EmbeddingsRunConfig cfg;
    cfg.variant = variant;
    cfg.vector_backend = "embed";
    cfg.summary_backend = "summary";
    cfg.mimic_backend = "mimic";
    cfg.artifact_dir = dir;
    cfg.workers = 2;
    cfg.epochs = 60;
    cfg.learning_rate = 0.3;
    cfg.batch_size = 8;
    return cfg;
}

}  // namespace

TEST_CASE("embedding extraction and artifact round trip") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 12);
    auto embeddings = extract_embeddings(rig->gateway, "embed", corpus, 2);
    REQUIRE(embeddings.size() == 12);
    for (const auto& e : embeddings) CHECK(e.vector.size() == 8);

    TempDir dir("embart");
    auto path = dir.path / "emb.jsonl";
    save_embeddings_jsonl(embeddings, "embed", path);
    auto loaded = load_embeddings_jsonl(path);
    REQUIRE(loaded.size() == embeddings.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].sample_id == embeddings[i].sample_id);
        CHECK(loaded[i].vector == embeddings[i].vector);
    }

    // The artifact format carries the backend name per row.
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(ordered_json::parse(line).at("backend") == "embed");
}

TEST_CASE("label pairs alternate positives and negatives deterministically") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 16);
    auto embeddings = extract_embeddings(rig->gateway, "embed", corpus, 2);

    auto pairs = build_label_pairs(embeddings, corpus, 1.0, 40);
    REQUIRE_FALSE(pairs.empty());
    CHECK(pairs.size() <= 40);
    std::size_t pos = 0;
    for (const auto& p : pairs) {
        CHECK((p.y == 0 || p.y == 1));
        CHECK(p.margin == 1.0);
        pos += p.y;
    }
    CHECK(pos > 0);
    CHECK(pos < pairs.size());

    auto again = build_label_pairs(embeddings, corpus, 1.0, 40);
    REQUIRE(again.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(again[i].a == pairs[i].a);
        CHECK(again[i].b == pairs[i].b);
        CHECK(again[i].y == pairs[i].y);
    }
}

TEST_CASE("regular embeddings variant trains a head and predicts the planted labels") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 60);
    SplitResult parts = split(corpus, {40, 10, 10, 42});
    TempDir dir("emb_vr");

    auto result = run_embeddings(base_config(dir.path / "run", EmbeddingsVariant::Regular),
                                 parts.train, parts.val, parts.test, rig->gateway,
                                 *rig->templates, rig->facets);
    CHECK(result.predictions.size() == 10);
    // Pattern-marked mock embeddings are linearly separable, so the head
    // should be close to perfect on them.
    CHECK(result.test_mean_ba >= 0.9);
    CHECK(rig->gateway.stats().calls("mimic") == 0);
    CHECK(rig->gateway.stats().calls("summary") == 0);

    for (const char* name : {"embeddings_train.jsonl", "embeddings_val.jsonl",
                             "embeddings_test.jsonl", "head.json", "predictions.jsonl",
                             "report.json", "manifest.json", "distance_matrix.json"}) {
        CHECK(std::filesystem::exists(dir.path / "run" / name));
    }
    auto matrix = ordered_json::parse(std::ifstream(dir.path / "run" / "distance_matrix.json"));
    std::size_t patterns = matrix.at("patterns").size();
    CHECK(patterns >= 2);
    CHECK(matrix.at("normalized_distances").size() == patterns);
}

TEST_CASE("series embeddings variant runs summary+mimic and fine-tunes the projection") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 40);
    SplitResult parts = split(corpus, {28, 6, 6, 42});
    TempDir dir("emb_vpr");

    auto cfg = base_config(dir.path / "run", EmbeddingsVariant::Picepr);
    auto result = run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway,
                                 *rig->templates, rig->facets);
    CHECK(result.predictions.size() == 6);
    CHECK(result.ledger.total_rows == 28);  // one mimic row per training sample
    CHECK(result.ledger.error_rows == 0);
    CHECK(rig->gateway.stats().calls("summary") == 28);
    CHECK(rig->gateway.stats().calls("mimic") == 28);
    CHECK(std::filesystem::exists(dir.path / "run" / "projection.json"));
    CHECK(std::filesystem::exists(dir.path / "run" / "mimic.jsonl"));

    Projection projection = Projection::load(dir.path / "run" / "projection.json");
    CHECK(projection.dim == 8);
    CHECK(projection.weights != Projection::identity(8).weights);  // training moved it
}

TEST_CASE("regular-tuned variant builds pairs from labels alone") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 30);
    SplitResult parts = split(corpus, {20, 5, 5, 42});
    TempDir dir("emb_vrt");

    auto cfg = base_config(dir.path / "run", EmbeddingsVariant::RegularTuned);
    auto result = run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway,
                                 *rig->templates, rig->facets);
    CHECK(result.predictions.size() == 5);
    CHECK(result.ledger.total_rows == 0);  // no augmentation stage ran
    CHECK(rig->gateway.stats().calls("mimic") == 0);
    CHECK(rig->gateway.stats().calls("summary") == 0);
    CHECK(std::filesystem::exists(dir.path / "run" / "projection.json"));
}

TEST_CASE("mimic failures are ledger rows, not aborts") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 30);
    corpus.samples[2].text += " MIMICFAIL";
    corpus.samples[9].text += " MIMICFAIL";
    // The summary mock echoes the marker, so the token reaches mimic via the
    // profile text.
    rig->mimic->fail_when_contains("MIMICFAIL", "malformed");

    SplitResult parts = split(corpus, {20, 5, 5, 42});
    int failing_in_train = 0;
    for (const auto& s : parts.train.samples) {
        failing_in_train += s.text.find("MIMICFAIL") != std::string::npos;
    }
    TempDir dir("emb_vat");
    auto cfg = base_config(dir.path / "run", EmbeddingsVariant::AugmentedTuned);
    auto result = run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway,
                                 *rig->templates, rig->facets);
    CHECK(result.ledger.total_rows == 20);
    CHECK(result.ledger.error_rows == failing_in_train);
    CHECK(result.predictions.size() == 5);
    CHECK(rig->gateway.stats().calls("summary") == 0);  // plain augmented variant skips S
}

TEST_CASE("facet features extend the input dimension by exactly 77") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 30);
    SplitResult parts = split(corpus, {20, 5, 5, 42});

    TempDir dir("emb_facets");
    auto cfg = base_config(dir.path / "facets_run", EmbeddingsVariant::Regular);
    cfg.use_facets = true;
    cfg.psycho_backend = "psycho";
    auto result = run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway,
                                 *rig->templates, rig->facets);
    CHECK(result.predictions.size() == 5);

    MlpParams head = MlpParams::load(dir.path / "facets_run" / "head.json");
    CHECK(head.config.input_dim == 8 + kFacetCount);

    auto cfg_plain = base_config(dir.path / "plain_run", EmbeddingsVariant::Regular);
    auto plain = run_embeddings(cfg_plain, parts.train, parts.val, parts.test, rig->gateway,
                                *rig->templates, rig->facets);
    MlpParams plain_head = MlpParams::load(dir.path / "plain_run" / "head.json");
    CHECK(plain_head.config.input_dim == 8);
    CHECK(head.config.input_dim == plain_head.config.input_dim + kFacetCount);
}

TEST_CASE("the optional facet merge reaches the mimic prompt") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 18);
    SplitResult parts = split(corpus, {12, 3, 3, 42});

    std::string last_mimic_user;
    std::mutex capture_mutex;
    rig->mimic->set_generator(
        [&, inner = scripted_mimic_generator()](const ChatRequest& req) {
            std::lock_guard<std::mutex> lock(capture_mutex);
            last_mimic_user = req.messages.back().content;
            return inner(req);
        });

    TempDir dir("emb_mfacets");
    auto cfg = base_config(dir.path / "off", EmbeddingsVariant::AugmentedTuned);
    run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway, *rig->templates,
                   rig->facets);
    CHECK(last_mimic_user.find(rig->facets.at(0)) == std::string::npos);  // off by default
    CHECK(rig->gateway.stats().calls("psycho") == 0);

    auto cfg_on = base_config(dir.path / "on", EmbeddingsVariant::AugmentedTuned);
    cfg_on.mimic_facets = true;
    cfg_on.psycho_backend = "psycho";
    run_embeddings(cfg_on, parts.train, parts.val, parts.test, rig->gateway, *rig->templates,
                   rig->facets);
    CHECK(last_mimic_user.find("\"" + rig->facets.at(0) + "\"") != std::string::npos);
    CHECK(rig->gateway.stats().calls("psycho") == 12);
}

TEST_CASE("completed embeddings runs are reused") {
    auto rig = make_pipeline_rig(SchemaKind::Mbti, 8);
    Corpus corpus = testing::synthetic_corpus(SchemaKind::Mbti, 24);
    SplitResult parts = split(corpus, {16, 4, 4, 42});
    TempDir dir("emb_reuse");
    auto cfg = base_config(dir.path / "run", EmbeddingsVariant::Regular);

    auto first = run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway,
                                *rig->templates, rig->facets);
    rig->gateway.reset_stats();
    auto second = run_embeddings(cfg, parts.train, parts.val, parts.test, rig->gateway,
                                 *rig->templates, rig->facets);
    CHECK(second.reused_completed_run);
    CHECK(rig->gateway.stats().total_calls() == 0);
    REQUIRE(second.predictions.size() == first.predictions.size());
}
