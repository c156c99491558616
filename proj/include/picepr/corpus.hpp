#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "picepr/errors.hpp"

namespace picepr {

enum class SchemaKind { BigFive, Mbti };

struct Dimension {
    std::string code;           // "O" or "S/N"
    std::string positive_pole;  // pole mapped to bit 1
    std::string negative_pole;  // pole mapped to bit 0
};

/// Personality schema: the ordered set of binary dimensions of one theory.
/// Big-5 carries O, C, E, A, N. MBTI carries S/N, P/J, I/E, T/F in the order
/// they are conventionally tabulated; for each MBTI dimension the first
/// letter of the code is the 0-pole and the second the 1-pole (S=0/N=1,
/// P=0/J=1, I=0/E=1, T=0/F=1). That letter-to-bit mapping is fixed here and
/// nowhere else.
struct PersonalitySchema {
    SchemaKind kind;
    std::vector<Dimension> dimensions;

    static const PersonalitySchema& big_five();
    static const PersonalitySchema& mbti();
    static const PersonalitySchema& of(SchemaKind kind);

    std::size_t size() const { return dimensions.size(); }
    /// "big5" / "mbti" — the identifier used in artifacts and config.
    std::string name() const;
    static SchemaKind kind_from_name(const std::string& name);
};

struct LabelVector {
    SchemaKind schema;
    std::vector<int> bits;  // each exactly 0 or 1, one per dimension

    bool operator==(const LabelVector&) const = default;
};

LabelVector make_label_vector(SchemaKind schema, std::vector<int> bits);

/// Decode a canonical 4-letter MBTI type ("INTJ") into the schema-ordered
/// bit vector; encode is the exact inverse for all 16 types.
LabelVector decode_mbti_type(const std::string& type);
std::string encode_mbti_type(const LabelVector& labels);

struct Sample {
    std::string id;
    std::string text;
    std::optional<LabelVector> labels;

    bool operator==(const Sample&) const = default;
};

struct Corpus {
    SchemaKind schema;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool operator==(const Corpus&) const = default;
};

enum class CorpusFormat { EssaysCsv, KaggleCsv };

/// Load a raw dataset CSV. Essays files need an id column, a text column and
/// the five y/n or 0/1 label columns; Kaggle files need `type` and `posts`.
/// The only text preprocessing applied is replacing the Kaggle "|||" post
/// separator with a newline.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

struct SplitSpec {
    std::size_t train_count = 0;
    std::size_t val_count = 0;
    std::size_t test_count = 0;
    std::uint64_t seed = 42;
};

struct SplitResult {
    Corpus train;
    Corpus val;
    Corpus test;
};

/// Deterministic seeded Fisher-Yates shuffle followed by contiguous slicing
/// into train/val/test. Identical (corpus, spec) inputs give identical
/// partitions on every platform.
SplitResult split(const Corpus& corpus, const SplitSpec& spec);

struct DimensionStats {
    std::string code;
    double fraction_ones = 0.0;
    bool imbalanced = false;  // max(p, 1-p) > 0.6
};

struct CorpusStats {
    std::size_t sample_count = 0;
    std::vector<DimensionStats> dimensions;
};

CorpusStats stats(const Corpus& corpus);

/// Canonical corpus artifact: JSONL, one {id, schema, text, labels} object
/// per line. save/load round-trip to an equal Corpus.
void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus_jsonl(const std::filesystem::path& path);

}  // namespace picepr
