#include <doctest.h>

#include "picepr/config.hpp"
#include "test_support.hpp"

using namespace picepr;

namespace {

const char* kSample = R"(
# top comment
[gateway]
cache_dir = "cache"
retry_max = 5
temperature = 0.7     # inline comment
verbose = true

[roles]
classify = "mock-classify"

[backend.alpha]
kind = "completions"
structure = "schema"
endpoint = "mock://classify?schema=big5"
model_id = "alpha-1"

[backend.beta]
kind = "embeddings"
structure = "text"
endpoint = "mock://embed"
model_id = "beta-1"
embedding_length = 12

[prices.alpha]
input = 0.000002
output = 0.000004
)";

}  // namespace

TEST_CASE("config parses sections, scalars and comments") {
    Config config = Config::parse(kSample);
    CHECK(config.get_string("gateway.cache_dir") == "cache");
    CHECK(config.get_int("gateway.retry_max", 0) == 5);
    CHECK(config.get_double("gateway.temperature", 0.0) == doctest::Approx(0.7));
    CHECK(config.get_bool("gateway.verbose", false) == true);
    CHECK(config.get_string("missing.key", "fallback") == "fallback");
    CHECK(config.sections_under("backend") == std::vector<std::string>{"alpha", "beta"});
}

TEST_CASE("config rejects malformed lines") {
    CHECK_THROWS_AS(Config::parse("[open\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("[s]\njust some words\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("[s]\nkey = \n"), ConfigError);
    Config c = Config::parse("[s]\nn = notanumber\n");
    CHECK_THROWS_AS(c.get_int("s.n", 0), ConfigError);
}

TEST_CASE("backend roster builds typed descriptors") {
    Config config = Config::parse(kSample);
    auto descriptors = config.backends();
    REQUIRE(descriptors.size() == 2);
    CHECK(descriptors[0].name == "alpha");
    CHECK(descriptors[0].kind == BackendKind::Completions);
    CHECK(descriptors[0].output_structure == OutputStructure::Schema);
    CHECK_FALSE(descriptors[0].embedding_length.has_value());
    CHECK(descriptors[1].kind == BackendKind::Embeddings);
    CHECK(descriptors[1].embedding_length == 12);

    PriceTable prices = config.prices();
    CHECK(prices.at("alpha").input == doctest::Approx(2e-6));
    CHECK(prices.at("alpha").output == doctest::Approx(4e-6));
    CHECK_THROWS_AS(prices.at("beta"), Error);

    CHECK(config.role_backend("classify") == "mock-classify");
    CHECK_THROWS_AS(config.role_backend("summary"), ConfigError);
}

TEST_CASE("descriptor invariants are validated at load") {
    // Embeddings require a length; completions must not carry one.
    CHECK_THROWS_AS(Config::parse("[backend.x]\nkind = \"embeddings\"\nendpoint = \"mock://e\"\n")
                        .backends(),
                    ConfigError);
    CHECK_THROWS_AS(Config::parse("[backend.x]\nkind = \"completions\"\nendpoint = \"mock://c\"\n"
                                  "embedding_length = 8\n")
                        .backends(),
                    ConfigError);
    // Schema/Mode structure is a completions property.
    CHECK_THROWS_AS(Config::parse("[backend.x]\nkind = \"embeddings\"\nstructure = \"schema\"\n"
                                  "endpoint = \"mock://e\"\nembedding_length = 8\n")
                        .backends(),
                    ConfigError);
}

TEST_CASE("mock endpoints register scripted transports end to end") {
    Config config = Config::parse(kSample);
    Gateway gateway;
    register_backends_from_config(gateway, config, FacetList::placeholder());
    CHECK(gateway.has_backend("alpha"));
    CHECK(gateway.has_backend("beta"));

    ChatRequest req;
    req.backend = "alpha";
    req.messages = {{Role::User, "classify me [pattern=10110]"}};
    ChatResponse resp = gateway.complete(req);
    auto doc = ordered_json::parse(resp.content);
    CHECK(doc.at("O") == 1);
    CHECK(doc.at("C") == 0);

    CHECK(gateway.embed("beta", "text").size() == 12);
}

TEST_CASE("the shipped default config loads") {
    Config config = Config::load(std::filesystem::path(PICEPR_SOURCE_DIR) / "config" /
                                 "default.toml");
    auto descriptors = config.backends();
    CHECK(descriptors.size() >= 5);
    CHECK(config.role_backend("classify") == "mock-classify");
    CHECK(config.prices().at("mock-embed").input > 0.0);
    CHECK(config.get_double("cost.overhead_multiplier", 0.0) == doctest::Approx(1.2));
}

TEST_CASE("the shipped facet file has exactly 77 unique names") {
    FacetList facets =
        FacetList::load(std::filesystem::path(PICEPR_SOURCE_DIR) / "config" / "facets.txt");
    CHECK(facets.size() == kFacetCount);
}
