#pragma once

#include <memory>
#include <string>

#include "picepr/gateway.hpp"

namespace picepr {

/// Chat-completions / embeddings adapter speaking the common JSON wire
/// shape ({model, messages[{role, content}], temperature, max_tokens,
/// response_format} -> choices[0].message.content + usage; {model, input}
/// -> data[0].embedding). The API key is read from the backend's
/// api_key_env at call time and sent as a bearer token; it is never stored.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(int timeout_seconds = 60);

    ChatResponse complete(const BackendDescriptor& backend, const ChatRequest& request) override;
    EmbeddingVector embed(const BackendDescriptor& backend, const std::string& text) override;

private:
    int timeout_seconds_;
};

/// Splits "http://host:port/some/path" into the client target and path
/// prefix httplib expects.
struct EndpointParts {
    std::string host_and_scheme;  // "http://host:port"
    std::string path_prefix;      // "/some/path" or ""
};

EndpointParts split_endpoint(const std::string& endpoint);

}  // namespace picepr
