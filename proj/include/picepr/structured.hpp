#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "picepr/errors.hpp"

namespace picepr {

using ordered_json = nlohmann::ordered_json;

enum class FieldKind { BinaryBit, PoleLetter, Text, BitMap, TextList };

struct SchemaField {
    std::string key;
    FieldKind kind = FieldKind::Text;
    std::vector<std::string> allowed_letters;  // PoleLetter only
    std::vector<std::string> bitmap_keys;      // BitMap only: the exact key set
};

/// The shape a completion component must emit. Every field is required,
/// key spelling is exact and case-sensitive, and value domains are closed:
/// BinaryBit is the integer 0 or 1, PoleLetter one of the allowed letters,
/// Text a non-empty string, BitMap an object over exactly `bitmap_keys` with
/// BinaryBit values, TextList an array of non-empty strings.
struct OutputSchema {
    std::vector<SchemaField> fields;

    const SchemaField* find(const std::string& key) const;
};

enum class ParseStatus { ParsedStrict, Repaired, Failed };

struct ParseOutcome {
    ParseStatus status = ParseStatus::Failed;
    std::optional<ordered_json> value;
    std::vector<std::string> edits;    // repair passes that changed the text
    std::optional<std::string> failure;

    bool ok() const { return status != ParseStatus::Failed; }
};

/// Strict parse first; on parse failure a fixed sequence of text repairs
/// (fence/prose strip, quote conversion, trailing commas, bracket/string
/// balancing, trailing-garbage drop) and a re-parse; schema validation always
/// runs last. Failures are returned as data, never thrown.
ParseOutcome parse_with_repair(const std::string& raw, const OutputSchema& schema);

/// Repair text without schema validation; used by the fixture tooling.
std::string repair_text(const std::string& raw, std::vector<std::string>* edits);

/// Validation only (exact keys, closed value domains). Returns the failure
/// reason, or nullopt when the document conforms.
std::optional<std::string> validate_against_schema(const ordered_json& doc,
                                                   const OutputSchema& schema);

struct ErrorLedger {
    std::size_t total_rows = 0;
    std::size_t error_rows = 0;

    ErrorLedger& operator+=(const ErrorLedger& other) {
        total_rows += other.total_rows;
        error_rows += other.error_rows;
        return *this;
    }
};

void record(ErrorLedger& ledger, const ParseOutcome& outcome);
void record_failure(ErrorLedger& ledger);
void record_success(ErrorLedger& ledger);

/// error_rows / total_rows. Throws EmptyLedger on an empty ledger.
double error_rate(const ErrorLedger& ledger);

class EmptyLedger : public Error {
public:
    EmptyLedger() : Error("EmptyLedger", "error rate undefined for zero rows") {}
};

}  // namespace picepr
