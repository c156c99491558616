#include <doctest.h>

#include <fstream>
#include <random>

#include "picepr/structured.hpp"
#include "test_support.hpp"

using namespace picepr;

namespace {

OutputSchema bit_schema() { return {{{"label", FieldKind::BinaryBit, {}, {}}}}; }

OutputSchema schema_by_name(const std::string& name) {
    if (name == "bit") return bit_schema();
    if (name == "bitO") return {{{"O", FieldKind::BinaryBit, {}, {}}}};
    if (name == "classify5") {
        return {{{"analysis", FieldKind::Text, {}, {}},
                 {"O", FieldKind::BinaryBit, {}, {}},
                 {"C", FieldKind::BinaryBit, {}, {}},
                 {"E", FieldKind::BinaryBit, {}, {}},
                 {"A", FieldKind::BinaryBit, {}, {}},
                 {"N", FieldKind::BinaryBit, {}, {}}}};
    }
    if (name == "summary") {
        return {{{"analysis", FieldKind::Text, {}, {}}, {"summary", FieldKind::Text, {}, {}}}};
    }
    if (name == "facets3") {
        return {{{"analysis", FieldKind::Text, {}, {}},
                 {"facets", FieldKind::BitMap, {}, {"f1", "f2", "f3"}}}};
    }
    if (name == "letters") return {{{"SN", FieldKind::PoleLetter, {"S", "N"}, {}}}};
    if (name == "list") return {{{"items", FieldKind::TextList, {}, {}}}};
    FAIL("unknown fixture schema ", name);
    return {};
}

ParseStatus status_by_name(const std::string& name) {
    if (name == "strict") return ParseStatus::ParsedStrict;
    if (name == "repaired") return ParseStatus::Repaired;
    return ParseStatus::Failed;
}

}  // namespace

TEST_CASE("strict parse of valid documents reports zero edits") {
    auto outcome = parse_with_repair(R"({"label": 1})", bit_schema());
    CHECK(outcome.status == ParseStatus::ParsedStrict);
    CHECK(outcome.edits.empty());
    CHECK(outcome.value->at("label") == 1);
}

TEST_CASE("fenced single-quoted trailing-comma document repairs to the expected value") {
    auto outcome = parse_with_repair("```json\n{'O': 1,}\n```", schema_by_name("bitO"));
    REQUIRE(outcome.status == ParseStatus::Repaired);
    CHECK(outcome.value->at("O") == 1);
    CHECK_FALSE(outcome.edits.empty());
}

TEST_CASE("out-of-domain value fails even though the JSON parses") {
    auto outcome = parse_with_repair(R"({"label": -1})", bit_schema());
    CHECK(outcome.status == ParseStatus::Failed);
    REQUIRE(outcome.failure.has_value());
    CHECK(outcome.failure->find("InvalidValue") != std::string::npos);
}

TEST_CASE("repair fixture corpus matches expected outcomes") {
    std::ifstream in(testing::fixture_path("repair_cases.jsonl"));
    REQUIRE(in.good());
    std::string line;
    std::size_t total = 0;
    std::size_t matched = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fixture = ordered_json::parse(line);
        ++total;
        CAPTURE(fixture.at("raw").get<std::string>());
        auto outcome = parse_with_repair(fixture.at("raw").get<std::string>(),
                                         schema_by_name(fixture.at("schema").get<std::string>()));
        bool ok = outcome.status == status_by_name(fixture.at("expected_status").get<std::string>());
        if (ok && fixture.contains("expected_value")) {
            ok = outcome.value.has_value() &&
                 *outcome.value == fixture.at("expected_value");
        }
        CHECK_MESSAGE(ok, "fixture mismatch: ", fixture.dump());
        matched += ok;
    }
    CHECK(total >= 40);
    CHECK(matched == total);
}

TEST_CASE("repairing already-valid JSON leaves it semantically unchanged") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 50; ++round) {
        ordered_json doc;
        doc["analysis"] = "evidence #" + std::to_string(rng() % 1000) + " with \"quotes\", commas";
        doc["summary"] = "summary'" + std::to_string(rng());
        std::string raw = doc.dump();
        auto outcome = parse_with_repair(raw, schema_by_name("summary"));
        CHECK(outcome.status == ParseStatus::ParsedStrict);
        CHECK(outcome.edits.empty());
        CHECK(*outcome.value == doc);

        std::vector<std::string> edits;
        CHECK(repair_text(raw, &edits) == raw);  // text-level fixed point as well
        CHECK(edits.empty());
    }
}

TEST_CASE("a repaired value always validates against the schema") {
    // Repair never skips validation: whatever comes back from the repair
    // passes has to clear the same validator.
    const char* raws[] = {
        "```json\n{'label': 1,}\n```",
        "{\"label\": 1, \"ex",
        "noise before {'label': 0} noise after",
    };
    for (const char* raw : raws) {
        auto outcome = parse_with_repair(raw, bit_schema());
        if (outcome.status == ParseStatus::Repaired) {
            CHECK_FALSE(validate_against_schema(*outcome.value, bit_schema()).has_value());
        }
    }
}

TEST_CASE("ledger counting and error rate") {
    ErrorLedger ledger;
    for (int i = 0; i < 494; ++i) record_success(ledger);
    CHECK(ledger.total_rows == 494);
    CHECK(ledger.error_rows == 0);
    CHECK(error_rate(ledger) == 0.0);

    ErrorLedger with_failures;
    for (int i = 0; i < 483; ++i) record_success(with_failures);
    for (int i = 0; i < 11; ++i) record_failure(with_failures);
    CHECK(with_failures.total_rows == 494);
    CHECK(with_failures.error_rows == 11);
    // Hand arithmetic: 11 / 494.
    CHECK(error_rate(with_failures) == doctest::Approx(0.0222672065).epsilon(1e-9));

    ErrorLedger table_iii;
    for (int i = 0; i < 497; ++i) record_success(table_iii);
    for (int i = 0; i < 3; ++i) record_failure(table_iii);
    CHECK(error_rate(table_iii) == doctest::Approx(0.006));
}

TEST_CASE("repaired outcomes do not count as errors") {
    ErrorLedger ledger;
    record(ledger, parse_with_repair("{'label': 1,}", bit_schema()));   // repaired
    record(ledger, parse_with_repair(R"({"label": 1})", bit_schema())); // strict
    record(ledger, parse_with_repair("nonsense", bit_schema()));        // failed
    CHECK(ledger.total_rows == 3);
    CHECK(ledger.error_rows == 1);
}

TEST_CASE("error rate monotonicity under appended outcomes") {
    std::mt19937_64 rng(21);
    for (int round = 0; round < 100; ++round) {
        ErrorLedger ledger;
        ledger.total_rows = 1 + rng() % 100;
        ledger.error_rows = rng() % (ledger.total_rows + 1);
        double before = error_rate(ledger);

        ErrorLedger worse = ledger;
        record_failure(worse);
        CHECK(error_rate(worse) >= before);

        ErrorLedger better = ledger;
        record_success(better);
        CHECK(error_rate(better) <= before);
    }
}

TEST_CASE("ledgers merge associatively") {
    ErrorLedger a{10, 2};
    ErrorLedger b{5, 1};
    ErrorLedger c{7, 0};
    ErrorLedger left = a;
    left += b;
    left += c;
    ErrorLedger bc = b;
    bc += c;
    ErrorLedger right = a;
    right += bc;
    CHECK(left.total_rows == right.total_rows);
    CHECK(left.error_rows == right.error_rows);
    CHECK(left.total_rows == 22);
    CHECK(left.error_rows == 3);
}

TEST_CASE("empty ledger has no error rate") {
    ErrorLedger ledger;
    CHECK_THROWS_AS(error_rate(ledger), EmptyLedger);
}
