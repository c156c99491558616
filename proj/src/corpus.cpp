#include "picepr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "picepr/util.hpp"

namespace picepr {

using ordered_json = nlohmann::ordered_json;

const PersonalitySchema& PersonalitySchema::big_five() {
    static const PersonalitySchema schema{
        SchemaKind::BigFive,
        {
            {"O", "Openness", "Closedness"},
            {"C", "Conscientiousness", "Unconscientiousness"},
            {"E", "Extraversion", "Introversion"},
            {"A", "Agreeableness", "Disagreeableness"},
            {"N", "Neuroticism", "Stability"},
        }};
    return schema;
}

const PersonalitySchema& PersonalitySchema::mbti() {
    // Dimension order and pole order follow the dataset tabulation; the
    // second-listed pole is the 1-bit.
    static const PersonalitySchema schema{
        SchemaKind::Mbti,
        {
            {"S/N", "Intuition", "Sensing"},
            {"P/J", "Judging", "Perceiving"},
            {"I/E", "Extraversion", "Introversion"},
            {"T/F", "Feeling", "Thinking"},
        }};
    return schema;
}

const PersonalitySchema& PersonalitySchema::of(SchemaKind kind) {
    return kind == SchemaKind::BigFive ? big_five() : mbti();
}

std::string PersonalitySchema::name() const {
    return kind == SchemaKind::BigFive ? "big5" : "mbti";
}

SchemaKind PersonalitySchema::kind_from_name(const std::string& name) {
    if (name == "big5") return SchemaKind::BigFive;
    if (name == "mbti") return SchemaKind::Mbti;
    throw CorpusError("MalformedLabel", "unknown schema name '" + name + "'");
}

LabelVector make_label_vector(SchemaKind schema, std::vector<int> bits) {
    const auto& dims = PersonalitySchema::of(schema).dimensions;
    if (bits.size() != dims.size()) {
        throw CorpusError("MalformedLabel",
                          "expected " + std::to_string(dims.size()) + " bits, got " +
                              std::to_string(bits.size()));
    }
    for (int b : bits) {
        if (b != 0 && b != 1) {
            throw CorpusError("MalformedLabel", "label bit must be 0 or 1, got " + std::to_string(b));
        }
    }
    return LabelVector{schema, std::move(bits)};
}

namespace {

// Position in a canonical MBTI type string -> (schema dimension, 0-letter,
// 1-letter). Type strings run attitude/perception/judgment/lifestyle
// ("INTJ") while the schema runs S/N, P/J, I/E, T/F.
struct MbtiLetterSlot {
    std::size_t string_pos;
    std::size_t dimension;
    char zero_letter;
    char one_letter;
};

constexpr MbtiLetterSlot kMbtiSlots[4] = {
    {0, 2, 'I', 'E'},
    {1, 0, 'S', 'N'},
    {2, 3, 'T', 'F'},
    {3, 1, 'P', 'J'},
};

}  // namespace

LabelVector decode_mbti_type(const std::string& type) {
    if (type.size() != 4) {
        throw CorpusError("MalformedLabel", "MBTI type must be 4 letters, got '" + type + "'");
    }
    std::vector<int> bits(4, 0);
    for (const auto& slot : kMbtiSlots) {
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(type[slot.string_pos])));
        if (c == slot.zero_letter) {
            bits[slot.dimension] = 0;
        } else if (c == slot.one_letter) {
            bits[slot.dimension] = 1;
        } else {
            throw CorpusError("MalformedLabel",
                              std::string("unexpected MBTI letter '") + type[slot.string_pos] +
                                  "' at position " + std::to_string(slot.string_pos) + " in '" + type +
                                  "'");
        }
    }
    return LabelVector{SchemaKind::Mbti, std::move(bits)};
}

std::string encode_mbti_type(const LabelVector& labels) {
    if (labels.schema != SchemaKind::Mbti || labels.bits.size() != 4) {
        throw CorpusError("MalformedLabel", "encode_mbti_type needs a 4-bit MBTI label vector");
    }
    std::string type(4, '?');
    for (const auto& slot : kMbtiSlots) {
        type[slot.string_pos] = labels.bits[slot.dimension] ? slot.one_letter : slot.zero_letter;
    }
    return type;
}

namespace {

// Minimal RFC 4180 reader: quoted fields may contain commas, newlines and
// doubled quotes. Returns rows of cells; skips a trailing empty line.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("MissingColumn", "cannot open file: " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false;
    bool row_started = false;

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                row_started = true;
                break;
            case ',':
                row.push_back(std::move(cell));
                cell.clear();
                row_started = true;
                break;
            case '\r':
                break;
            case '\n':
                if (row_started || !cell.empty() || !row.empty()) {
                    row.push_back(std::move(cell));
                    cell.clear();
                    rows.push_back(std::move(row));
                    row.clear();
                    row_started = false;
                }
                break;
            default:
                cell.push_back(c);
                row_started = true;
                break;
        }
    }
    if (row_started || !cell.empty() || !row.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

int parse_binary_label(const std::string& raw, const std::string& column, std::size_t row_index) {
    std::string v = to_lower(trim(raw));
    if (v == "1" || v == "y" || v == "yes") return 1;
    if (v == "0" || v == "n" || v == "no") return 0;
    throw CorpusError("MalformedLabel", "row " + std::to_string(row_index) + " column '" + column +
                                            "': expected 0/1 or y/n, got '" + raw + "'");
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::vector<std::string>& candidates, const std::string& what) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name = to_lower(trim(header[i]));
        if (!name.empty() && name.front() == '#') name.erase(0, 1);
        for (const auto& cand : candidates) {
            if (name == cand) return i;
        }
    }
    throw CorpusError("MissingColumn", "no " + what + " column in CSV header");
}

Corpus load_essays(const std::vector<std::vector<std::string>>& rows) {
    const auto& header = rows.front();
    std::size_t id_col = find_column(header, {"authid", "author_id", "id"}, "author id");
    std::size_t text_col = find_column(header, {"text", "essay"}, "text");
    // Schema order O, C, E, A, N regardless of column order in the file.
    const std::vector<std::pair<std::string, std::vector<std::string>>> label_specs = {
        {"O", {"copn", "opn", "o", "openness"}},
        {"C", {"ccon", "con", "c", "conscientiousness"}},
        {"E", {"cext", "ext", "e", "extraversion"}},
        {"A", {"cagr", "agr", "a", "agreeableness"}},
        {"N", {"cneu", "neu", "n", "neuroticism"}},
    };
    std::vector<std::size_t> label_cols;
    for (const auto& [code, names] : label_specs) {
        label_cols.push_back(find_column(header, names, "label '" + code + "'"));
    }

    Corpus corpus{SchemaKind::BigFive, {}};
    corpus.samples.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() <= text_col || row.size() <= id_col) {
            throw CorpusError("MissingColumn", "row " + std::to_string(r) + " has too few cells");
        }
        Sample sample;
        sample.id = trim(row[id_col]);
        if (sample.id.empty()) sample.id = "essays-" + std::to_string(r);
        sample.text = row[text_col];
        if (trim(sample.text).empty()) {
            throw CorpusError("EmptyText", "row " + std::to_string(r) + " has empty text");
        }
        std::vector<int> bits;
        bits.reserve(label_cols.size());
        for (std::size_t d = 0; d < label_cols.size(); ++d) {
            if (row.size() <= label_cols[d]) {
                throw CorpusError("MissingColumn", "row " + std::to_string(r) + " has too few cells");
            }
            bits.push_back(parse_binary_label(row[label_cols[d]], label_specs[d].first, r));
        }
        sample.labels = LabelVector{SchemaKind::BigFive, std::move(bits)};
        corpus.samples.push_back(std::move(sample));
    }
    return corpus;
}

Corpus load_kaggle(const std::vector<std::vector<std::string>>& rows) {
    const auto& header = rows.front();
    std::size_t type_col = find_column(header, {"type"}, "type");
    std::size_t posts_col = find_column(header, {"posts"}, "posts");

    Corpus corpus{SchemaKind::Mbti, {}};
    corpus.samples.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() <= type_col || row.size() <= posts_col) {
            throw CorpusError("MissingColumn", "row " + std::to_string(r) + " has too few cells");
        }
        Sample sample;
        sample.id = "kaggle-" + std::to_string(r);
        // Replace the post separator with a newline; nothing else is touched.
        std::string text = row[posts_col];
        std::size_t pos = 0;
        while ((pos = text.find("|||", pos)) != std::string::npos) {
            text.replace(pos, 3, "\n");
            pos += 1;
        }
        sample.text = std::move(text);
        if (trim(sample.text).empty()) {
            throw CorpusError("EmptyText", "row " + std::to_string(r) + " has empty posts");
        }
        sample.labels = decode_mbti_type(trim(row[type_col]));
        corpus.samples.push_back(std::move(sample));
    }
    return corpus;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    auto rows = read_csv(path);
    if (rows.empty()) {
        throw CorpusError("MissingColumn", "empty CSV: " + path.string());
    }
    return format == CorpusFormat::EssaysCsv ? load_essays(rows) : load_kaggle(rows);
}

SplitResult split(const Corpus& corpus, const SplitSpec& spec) {
    if (spec.train_count + spec.val_count + spec.test_count != corpus.size()) {
        throw CorpusError("CountMismatch",
                          "split counts sum to " +
                              std::to_string(spec.train_count + spec.val_count + spec.test_count) +
                              " but corpus has " + std::to_string(corpus.size()) + " samples");
    }
    auto order = shuffled_indices(corpus.size(), spec.seed);
    SplitResult result{{corpus.schema, {}}, {corpus.schema, {}}, {corpus.schema, {}}};
    result.train.samples.reserve(spec.train_count);
    result.val.samples.reserve(spec.val_count);
    result.test.samples.reserve(spec.test_count);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Sample& s = corpus.samples[order[i]];
        if (i < spec.train_count) {
            result.train.samples.push_back(s);
        } else if (i < spec.train_count + spec.val_count) {
            result.val.samples.push_back(s);
        } else {
            result.test.samples.push_back(s);
        }
    }
    return result;
}

CorpusStats stats(const Corpus& corpus) {
    const auto& schema = PersonalitySchema::of(corpus.schema);
    std::vector<std::size_t> ones(schema.size(), 0);
    for (const auto& sample : corpus.samples) {
        if (!sample.labels) {
            throw CorpusError("UnlabeledSample", "sample '" + sample.id + "' has no labels");
        }
        for (std::size_t d = 0; d < schema.size(); ++d) {
            ones[d] += static_cast<std::size_t>(sample.labels->bits[d]);
        }
    }
    CorpusStats out;
    out.sample_count = corpus.size();
    for (std::size_t d = 0; d < schema.size(); ++d) {
        DimensionStats ds;
        ds.code = schema.dimensions[d].code;
        ds.fraction_ones = corpus.samples.empty()
                               ? 0.0
                               : static_cast<double>(ones[d]) / static_cast<double>(corpus.size());
        double p = ds.fraction_ones;
        ds.imbalanced = std::max(p, 1.0 - p) > 0.6;
        out.dimensions.push_back(ds);
    }
    return out;
}

void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CorpusError("MissingColumn", "cannot open for writing: " + path.string());
    }
    const std::string schema_name = PersonalitySchema::of(corpus.schema).name();
    for (const auto& sample : corpus.samples) {
        ordered_json line;
        line["id"] = sample.id;
        line["schema"] = schema_name;
        line["text"] = sample.text;
        if (sample.labels) {
            line["labels"] = sample.labels->bits;
        } else {
            line["labels"] = nullptr;
        }
        out << line.dump() << "\n";
    }
}

Corpus load_corpus_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("MissingColumn", "cannot open: " + path.string());
    }
    std::optional<SchemaKind> schema;
    Corpus corpus{SchemaKind::BigFive, {}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ordered_json obj = ordered_json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            throw CorpusError("MalformedLabel",
                              "line " + std::to_string(line_no) + " is not a JSON object");
        }
        SchemaKind kind = PersonalitySchema::kind_from_name(obj.at("schema").get<std::string>());
        if (!schema) {
            schema = kind;
            corpus.schema = kind;
        } else if (*schema != kind) {
            throw CorpusError("MalformedLabel", "mixed schemas in corpus file");
        }
        Sample sample;
        sample.id = obj.at("id").get<std::string>();
        sample.text = obj.at("text").get<std::string>();
        if (sample.text.empty()) {
            throw CorpusError("EmptyText", "line " + std::to_string(line_no) + " has empty text");
        }
        if (obj.contains("labels") && !obj.at("labels").is_null()) {
            sample.labels = make_label_vector(kind, obj.at("labels").get<std::vector<int>>());
        }
        corpus.samples.push_back(std::move(sample));
    }
    return corpus;
}

}  // namespace picepr
