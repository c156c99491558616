#include "picepr/mock.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "picepr/components.hpp"
#include "picepr/util.hpp"

namespace picepr {

namespace {

std::string last_user_content(const ChatRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == Role::User) return it->content;
    }
    return {};
}

std::string hex8(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%08llx", static_cast<unsigned long long>(h & 0xffffffffull));
    return buf;
}

std::string flipped(const std::string& pattern) {
    std::string out = pattern;
    for (char& c : out) c = (c == '0') ? '1' : '0';
    return out;
}

[[noreturn]] void throw_kind(const std::string& kind, const std::string& what) {
    if (kind == "rate") throw RateLimited("mock: " + what);
    if (kind == "auth") throw AuthError("mock: " + what);
    throw TransportError("mock: " + what);
}

}  // namespace

std::optional<std::string> extract_pattern_marker(const std::string& text) {
    const std::string tag = "[pattern=";
    auto pos = text.find(tag);
    if (pos == std::string::npos) return std::nullopt;
    std::string bits;
    for (std::size_t i = pos + tag.size(); i < text.size() && text[i] != ']'; ++i) {
        if (text[i] != '0' && text[i] != '1') return std::nullopt;
        bits.push_back(text[i]);
    }
    if (bits.empty()) return std::nullopt;
    return bits;
}

void MockTransport::add_canned(const std::string& user_content, const std::string& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    canned_[user_content] = response;
}

void MockTransport::fail_first(int n, const std::string& kind) {
    transient_failures_ = n;
    transient_kind_ = kind;
}

void MockTransport::fail_when_contains(std::string token, std::string kind) {
    fail_token_ = std::move(token);
    fail_kind_ = std::move(kind);
}

ChatResponse MockTransport::complete(const BackendDescriptor&, const ChatRequest& request) {
    if (transient_failures_ > 0 && transient_failures_.fetch_sub(1) > 0) {
        throw_kind(transient_kind_, "injected transient failure");
    }

    const std::string user = last_user_content(request);
    std::string content;

    if (!fail_token_.empty() && user.find(fail_token_) != std::string::npos) {
        if (fail_kind_ == "malformed") {
            content = "I am sorry, I cannot produce JSON for this input.";
        } else if (fail_kind_ == "invalid") {
            content = R"({"label": -1})";
        } else {
            throw_kind(fail_kind_, "injected failure for token '" + fail_token_ + "'");
        }
    } else {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = canned_.find(user);
            if (it != canned_.end()) content = it->second;
        }
        if (content.empty()) {
            if (!generator_) throw TransportError("mock has no response for request");
            content = generator_(request);
        }
    }

    ChatResponse resp;
    resp.finish = FinishReason::Stop;
    if (estimate_tokens(content) > static_cast<std::uint64_t>(request.max_output_tokens)) {
        content.resize(static_cast<std::size_t>(request.max_output_tokens) * 4);
        resp.finish = FinishReason::Truncated;
    }
    resp.content = std::move(content);
    resp.usage.input_tokens = estimate_input_tokens(request.messages);
    resp.usage.output_tokens = estimate_tokens(resp.content);
    resp.usage_reported = true;
    return resp;
}

EmbeddingVector MockTransport::embed(const BackendDescriptor& backend, const std::string& text) {
    if (transient_failures_ > 0 && transient_failures_.fetch_sub(1) > 0) {
        throw_kind(transient_kind_, "injected transient failure");
    }
    int n = backend.embedding_length.value_or(8);
    if (embed_generator_) return embed_generator_(text, n);
    return scripted_embed_generator()(text, n);
}

MockTransport::ContentFn scripted_summary_generator() {
    return [](const ChatRequest& request) {
        const std::string user = last_user_content(request);
        std::uint64_t h = fnv1a64(user);
        ordered_json j;
        j["analysis"] = "Evidence " + hex8(h) +
                        ": consistent tone, concrete word choice, steady sentence rhythm.";
        std::string summary =
            "The author comes across as a " + hex8(h ^ 0x9e3779b97f4a7c15ull) + " profile writer.";
        if (auto marker = extract_pattern_marker(user)) {
            summary += " [pattern=" + *marker + "]";
        }
        j["summary"] = summary;
        return j.dump();
    };
}

MockTransport::ContentFn scripted_psycho_generator(FacetList facets) {
    return [facets = std::move(facets)](const ChatRequest& request) {
        const std::string user = last_user_content(request);
        ordered_json facet_map;
        for (std::size_t i = 0; i < facets.size(); ++i) {
            facet_map[facets.at(i)] = static_cast<int>(fnv1a64(user + "#" + facets.at(i)) & 1);
        }
        ordered_json j;
        j["analysis"] = "Facet review " + hex8(fnv1a64(user)) + ".";
        j["facets"] = std::move(facet_map);
        return j.dump();
    };
}

MockTransport::ContentFn scripted_classify_generator(SchemaKind schema) {
    return [schema](const ChatRequest& request) {
        const std::string user = last_user_content(request);
        const auto& dims = PersonalitySchema::of(schema).dimensions;
        auto marker = extract_pattern_marker(user);
        std::vector<int> bits(dims.size());
        for (std::size_t d = 0; d < dims.size(); ++d) {
            if (marker && marker->size() == dims.size()) {
                bits[d] = (*marker)[d] - '0';
            } else {
                bits[d] = static_cast<int>(fnv1a64(user + "|" + dims[d].code) & 1);
            }
        }
        ordered_json j;
        j["analysis"] = "Reasoning " + hex8(fnv1a64(user)) + ": cues weighed per dimension.";
        for (std::size_t d = 0; d < dims.size(); ++d) {
            if (schema == SchemaKind::BigFive) {
                j[classify_label_key(dims[d])] = bits[d];
            } else {
                j[classify_label_key(dims[d])] = pole_letter(dims[d], bits[d]);
            }
        }
        return j.dump();
    };
}

MockTransport::ContentFn scripted_mimic_generator() {
    return [](const ChatRequest& request) {
        const std::string user = last_user_content(request);
        std::uint64_t h = fnv1a64(user);
        auto marker = extract_pattern_marker(user);
        std::string pos = "Synthetic post " + hex8(h) + ": mirrors the given traits.";
        std::string neg = "Synthetic post " + hex8(h ^ 0x5bd1e995ull) + ": contradicts the traits.";
        if (marker) {
            pos += " [pattern=" + *marker + "]";
            neg += " [pattern=" + flipped(*marker) + "]";
        }
        ordered_json j;
        j["positive"] = pos;
        j["negative"] = neg;
        return j.dump();
    };
}

MockTransport::EmbedFn scripted_embed_generator() {
    return [](const std::string& text, int length) {
        EmbeddingVector v(static_cast<std::size_t>(length));
        auto marker = extract_pattern_marker(text);
        for (int i = 0; i < length; ++i) {
            std::uint64_t h = fnv1a64(text + ":" + std::to_string(i));
            double noise = static_cast<double>(h % 10007) / 10007.0;  // [0,1)
            if (marker && i < static_cast<int>(marker->size())) {
                // Pattern-marked texts embed linearly separably: the leading
                // coordinates encode the label bits with small jitter.
                double bit = (*marker)[static_cast<std::size_t>(i)] == '1' ? 1.0 : -1.0;
                v[static_cast<std::size_t>(i)] = bit + 0.2 * (noise - 0.5);
            } else {
                v[static_cast<std::size_t>(i)] = 2.0 * noise - 1.0;
            }
        }
        return v;
    };
}

std::shared_ptr<Transport> make_scripted_mock(const BackendDescriptor& descriptor,
                                              const FacetList& facets) {
    auto mock = std::make_shared<MockTransport>();
    const std::string& ep = descriptor.endpoint;
    auto has = [&](const char* what) { return ep.find(what) != std::string::npos; };
    if (descriptor.kind == BackendKind::Embeddings || has("embed")) {
        mock->set_embed_generator(scripted_embed_generator());
    } else if (has("summary")) {
        mock->set_generator(scripted_summary_generator());
    } else if (has("psycho")) {
        mock->set_generator(scripted_psycho_generator(facets));
    } else if (has("classify")) {
        SchemaKind kind = has("schema=mbti") ? SchemaKind::Mbti : SchemaKind::BigFive;
        mock->set_generator(scripted_classify_generator(kind));
    } else if (has("mimic")) {
        mock->set_generator(scripted_mimic_generator());
    } else {
        throw ConfigError("unrecognized mock endpoint '" + ep + "'");
    }
    return mock;
}

}  // namespace picepr
