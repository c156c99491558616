#include "picepr/structured.hpp"

#include <algorithm>
#include <cctype>

namespace picepr {

const SchemaField* OutputSchema::find(const std::string& key) const {
    for (const auto& f : fields) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

namespace {

std::string rtrim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

// Forward scan state of a candidate JSON text: whether it ends inside an
// unterminated string, the open bracket stack, and the span of the last
// complete string token.
struct ScanState {
    bool open_string = false;
    std::vector<char> stack;
    std::size_t last_string_begin = std::string::npos;
    std::size_t last_string_end = std::string::npos;  // one past the closing quote
};

ScanState scan(const std::string& s) {
    ScanState st;
    bool in_string = false;
    bool escaped = false;
    std::size_t string_begin = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
                st.last_string_begin = string_begin;
                st.last_string_end = i + 1;
            }
            continue;
        }
        switch (c) {
            case '"':
                in_string = true;
                string_begin = i;
                break;
            case '{':
            case '[':
                st.stack.push_back(c);
                break;
            case '}':
                if (!st.stack.empty() && st.stack.back() == '{') st.stack.pop_back();
                break;
            case ']':
                if (!st.stack.empty() && st.stack.back() == '[') st.stack.pop_back();
                break;
            default:
                break;
        }
    }
    st.open_string = in_string;
    return st;
}

// Pass 1: drop markdown fences and any prose outside the outermost braces.
std::string strip_fences_and_prose(const std::string& s) {
    std::size_t first = s.find('{');
    if (first == std::string::npos) return s;
    std::size_t last = s.rfind('}');
    if (last != std::string::npos && last > first) {
        return s.substr(first, last - first + 1);
    }
    return s.substr(first);
}

// Pass 2: single-quoted strings become double-quoted. Apostrophes inside
// double-quoted strings are left alone; double quotes inside single-quoted
// strings get escaped.
std::string convert_single_quotes(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_dquote = false;
    bool in_squote = false;
    bool escaped = false;
    for (char c : s) {
        if (in_dquote) {
            out.push_back(c);
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_dquote = false;
            }
            continue;
        }
        if (in_squote) {
            if (escaped) {
                if (c != '\'') out.push_back('\\');  // \' needs no escape once double-quoted
                out.push_back(c);
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '\'') {
                out.push_back('"');
                in_squote = false;
            } else if (c == '"') {
                out += "\\\"";
            } else {
                out.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_dquote = true;
            out.push_back(c);
        } else if (c == '\'') {
            in_squote = true;
            out.push_back('"');
        } else {
            out.push_back(c);
        }
    }
    return out;
}

// Pass 3: remove commas that directly precede a closing brace or bracket.
std::string remove_trailing_commas(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            out.push_back(c);
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out.push_back(c);
            continue;
        }
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;  // drop it
        }
        out.push_back(c);
    }
    return out;
}

// Pass 4: close an unterminated string, drop a dangling separator or a
// dangling key left by truncation, then append the missing closers.
std::string balance_brackets(const std::string& s) {
    std::string out = s;
    ScanState st = scan(out);
    if (st.open_string) {
        out.push_back('"');
    }
    for (;;) {
        out = rtrim(out);
        if (out.empty()) break;
        char back = out.back();
        if (back == ',') {
            out.pop_back();
            continue;
        }
        if (back == ':') {
            out.pop_back();
            out = rtrim(out);
            ScanState key_state = scan(out);
            if (!out.empty() && out.back() == '"' && key_state.last_string_end == out.size()) {
                out.erase(key_state.last_string_begin);
            }
            continue;
        }
        if (back == '"') {
            // A trailing string directly inside an object that follows '{'
            // or ',' is a key whose value got cut off; a string after ':'
            // or inside an array is a complete value and stays.
            ScanState st2 = scan(out);
            if (!st2.stack.empty() && st2.stack.back() == '{' &&
                st2.last_string_end == out.size()) {
                std::size_t pos = st2.last_string_begin;
                while (pos > 0 && std::isspace(static_cast<unsigned char>(out[pos - 1]))) --pos;
                char prev = pos > 0 ? out[pos - 1] : '\0';
                if (prev == ',' || prev == '{') {
                    out.erase(st2.last_string_begin);
                    continue;
                }
            }
            break;
        }
        break;
    }
    st = scan(out);
    for (auto it = st.stack.rbegin(); it != st.stack.rend(); ++it) {
        out.push_back(*it == '{' ? '}' : ']');
    }
    return out;
}

// Pass 5: truncate anything after the position where the outermost
// container closes.
std::string drop_after_balanced_close(const std::string& s) {
    bool in_string = false;
    bool escaped = false;
    int depth = 0;
    bool seen_open = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{' || c == '[') {
            ++depth;
            seen_open = true;
        } else if (c == '}' || c == ']') {
            --depth;
            if (seen_open && depth == 0) {
                return s.substr(0, i + 1);
            }
        }
    }
    return s;
}

void apply_pass(std::string& text, std::vector<std::string>* edits, const char* name,
                std::string (*pass)(const std::string&)) {
    std::string next = pass(text);
    if (next != text && edits) edits->push_back(name);
    text = std::move(next);
}

std::optional<std::string> validate_bit(const ordered_json& v, const std::string& key) {
    if (v.is_number_integer()) {
        auto n = v.get<long long>();
        if (n == 0 || n == 1) return std::nullopt;
        return "InvalidValue: '" + key + "' must be 0 or 1, got " + std::to_string(n);
    }
    return "InvalidValue: '" + key + "' must be the integer 0 or 1";
}

}  // namespace

std::string repair_text(const std::string& raw, std::vector<std::string>* edits) {
    std::string text = raw;
    apply_pass(text, edits, "strip_fences_and_prose", strip_fences_and_prose);
    apply_pass(text, edits, "convert_single_quotes", convert_single_quotes);
    apply_pass(text, edits, "remove_trailing_commas", remove_trailing_commas);
    apply_pass(text, edits, "balance_brackets", balance_brackets);
    apply_pass(text, edits, "drop_after_balanced_close", drop_after_balanced_close);
    return text;
}

std::optional<std::string> validate_against_schema(const ordered_json& doc,
                                                   const OutputSchema& schema) {
    if (!doc.is_object()) {
        return std::string("InvalidValue: top level is not a JSON object");
    }
    for (const auto& field : schema.fields) {
        auto it = doc.find(field.key);
        if (it == doc.end()) {
            return "MissingKey: '" + field.key + "'";
        }
        const ordered_json& v = *it;
        switch (field.kind) {
            case FieldKind::BinaryBit: {
                if (auto err = validate_bit(v, field.key)) return err;
                break;
            }
            case FieldKind::PoleLetter: {
                if (!v.is_string()) {
                    return "InvalidValue: '" + field.key + "' must be a letter string";
                }
                const auto& s = v.get_ref<const std::string&>();
                if (std::find(field.allowed_letters.begin(), field.allowed_letters.end(), s) ==
                    field.allowed_letters.end()) {
                    return "InvalidValue: '" + field.key + "' = '" + s + "' not in allowed set";
                }
                break;
            }
            case FieldKind::Text: {
                if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
                    return "InvalidValue: '" + field.key + "' must be a non-empty string";
                }
                break;
            }
            case FieldKind::BitMap: {
                if (!v.is_object()) {
                    return "InvalidValue: '" + field.key + "' must be an object";
                }
                if (v.size() != field.bitmap_keys.size()) {
                    return "InvalidValue: '" + field.key + "' has " + std::to_string(v.size()) +
                           " keys, expected " + std::to_string(field.bitmap_keys.size());
                }
                for (const auto& bk : field.bitmap_keys) {
                    auto bit = v.find(bk);
                    if (bit == v.end()) {
                        return "MissingKey: '" + field.key + "." + bk + "'";
                    }
                    if (auto err = validate_bit(*bit, field.key + "." + bk)) return err;
                }
                break;
            }
            case FieldKind::TextList: {
                if (!v.is_array()) {
                    return "InvalidValue: '" + field.key + "' must be an array";
                }
                for (const auto& item : v) {
                    if (!item.is_string() || item.get_ref<const std::string&>().empty()) {
                        return "InvalidValue: '" + field.key + "' items must be non-empty strings";
                    }
                }
                break;
            }
        }
    }
    // Key matching is exact: anything outside the declared set is a spelling
    // error, not an extension point.
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (schema.find(it.key()) == nullptr) {
            return "UnknownKey: '" + it.key() + "'";
        }
    }
    return std::nullopt;
}

ParseOutcome parse_with_repair(const std::string& raw, const OutputSchema& schema) {
    ParseOutcome outcome;
    ordered_json strict = ordered_json::parse(raw, nullptr, false);
    if (!strict.is_discarded()) {
        if (auto err = validate_against_schema(strict, schema)) {
            outcome.status = ParseStatus::Failed;
            outcome.failure = *err;
            return outcome;
        }
        outcome.status = ParseStatus::ParsedStrict;
        outcome.value = std::move(strict);
        return outcome;
    }

    std::vector<std::string> edits;
    std::string repaired_text = repair_text(raw, &edits);
    ordered_json doc = ordered_json::parse(repaired_text, nullptr, false);
    if (doc.is_discarded()) {
        outcome.status = ParseStatus::Failed;
        outcome.failure = "UnparseableJson: repairs did not yield valid JSON";
        outcome.edits = std::move(edits);
        return outcome;
    }
    if (auto err = validate_against_schema(doc, schema)) {
        outcome.status = ParseStatus::Failed;
        outcome.failure = *err;
        outcome.edits = std::move(edits);
        return outcome;
    }
    outcome.status = ParseStatus::Repaired;
    outcome.value = std::move(doc);
    outcome.edits = std::move(edits);
    return outcome;
}

void record(ErrorLedger& ledger, const ParseOutcome& outcome) {
    ++ledger.total_rows;
    if (outcome.status == ParseStatus::Failed) ++ledger.error_rows;
}

void record_failure(ErrorLedger& ledger) {
    ++ledger.total_rows;
    ++ledger.error_rows;
}

void record_success(ErrorLedger& ledger) { ++ledger.total_rows; }

double error_rate(const ErrorLedger& ledger) {
    if (ledger.total_rows == 0) throw EmptyLedger();
    return static_cast<double>(ledger.error_rows) / static_cast<double>(ledger.total_rows);
}

}  // namespace picepr
