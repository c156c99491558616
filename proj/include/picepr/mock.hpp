#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "picepr/corpus.hpp"
#include "picepr/facets.hpp"
#include "picepr/gateway.hpp"

namespace picepr {

/// Deterministic stand-in for a remote model. Responses are a pure function
/// of the request (canned map or generator), so repeated runs produce
/// bit-identical transcripts. Failure injection covers the transport-,
/// format- and content-level error paths the real backends exhibit.
class MockTransport : public Transport {
public:
    using ContentFn = std::function<std::string(const ChatRequest&)>;
    using EmbedFn = std::function<EmbeddingVector(const std::string& text, int length)>;

    /// Exact-match canned responses keyed by the last user message.
    void add_canned(const std::string& user_content, const std::string& response);
    void set_generator(ContentFn fn) { generator_ = std::move(fn); }
    void set_embed_generator(EmbedFn fn) { embed_generator_ = std::move(fn); }

    /// First `n` calls raise a transient error ("transport" or "rate").
    void fail_first(int n, const std::string& kind);
    /// Requests whose user content contains `token` get `kind` treatment:
    /// "transport"/"rate"/"auth" throw; "malformed" returns broken JSON;
    /// "invalid" returns schema-breaking JSON.
    void fail_when_contains(std::string token, std::string kind);

    ChatResponse complete(const BackendDescriptor& backend, const ChatRequest& request) override;
    EmbeddingVector embed(const BackendDescriptor& backend, const std::string& text) override;

private:
    std::map<std::string, std::string> canned_;
    ContentFn generator_;
    EmbedFn embed_generator_;
    std::atomic<int> transient_failures_{0};
    std::string transient_kind_;
    std::string fail_token_;
    std::string fail_kind_;
    std::mutex mutex_;
};

/// Extracts the "[pattern=0101]" marker synthetic sample texts carry, if
/// any. The scripted mocks thread it through summaries so downstream stages
/// stay label-consistent end to end.
std::optional<std::string> extract_pattern_marker(const std::string& text);

/// Scripted content generators for each component role. All output is
/// schema-valid JSON derived deterministically from the request text.
MockTransport::ContentFn scripted_summary_generator();
MockTransport::ContentFn scripted_psycho_generator(FacetList facets);
MockTransport::ContentFn scripted_classify_generator(SchemaKind schema);
MockTransport::ContentFn scripted_mimic_generator();
MockTransport::EmbedFn scripted_embed_generator();

/// Builds a transport for a "mock://..." endpoint:
///   mock://summary | mock://psycho | mock://classify?schema=big5|mbti |
///   mock://mimic | mock://embed
std::shared_ptr<Transport> make_scripted_mock(const BackendDescriptor& descriptor,
                                              const FacetList& facets);

}  // namespace picepr
