#include "picepr/http_transport.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace picepr {

namespace {

std::string api_key_for(const BackendDescriptor& backend) {
    if (backend.api_key_env.empty()) return {};
    const char* value = std::getenv(backend.api_key_env.c_str());
    return value ? value : "";
}

httplib::Headers make_headers(const BackendDescriptor& backend) {
    httplib::Headers headers;
    std::string key = api_key_for(backend);
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    return headers;
}

[[noreturn]] void raise_for_status(const BackendDescriptor& backend, int status,
                                   const std::string& body) {
    std::string what = "backend '" + backend.name + "' returned HTTP " + std::to_string(status) +
                       (body.empty() ? "" : ": " + body.substr(0, 200));
    if (status == 401 || status == 403) throw AuthError(what);
    if (status == 429) throw RateLimited(what);
    if (status == 400 || status == 422) throw BackendRejectedFormat(what);
    throw TransportError(what);
}

nlohmann::json post_json(const BackendDescriptor& backend, const std::string& path,
                         const nlohmann::json& body, int timeout_seconds) {
    EndpointParts parts = split_endpoint(backend.endpoint);
    httplib::Client client(parts.host_and_scheme);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);

    auto result = client.Post(parts.path_prefix + path, make_headers(backend), body.dump(),
                              "application/json");
    if (!result) {
        throw TransportError("backend '" + backend.name +
                             "': " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        raise_for_status(backend, result->status, result->body);
    }
    nlohmann::json doc = nlohmann::json::parse(result->body, nullptr, false);
    if (doc.is_discarded()) {
        throw TransportError("backend '" + backend.name + "' returned unparseable JSON body");
    }
    return doc;
}

}  // namespace

EndpointParts split_endpoint(const std::string& endpoint) {
    EndpointParts parts;
    auto scheme_end = endpoint.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string::npos) {
        parts.host_and_scheme = endpoint;
    } else {
        parts.host_and_scheme = endpoint.substr(0, path_start);
        parts.path_prefix = endpoint.substr(path_start);
        if (parts.path_prefix == "/") parts.path_prefix.clear();
    }
    return parts;
}

HttpTransport::HttpTransport(int timeout_seconds) : timeout_seconds_(timeout_seconds) {}

ChatResponse HttpTransport::complete(const BackendDescriptor& backend,
                                     const ChatRequest& request) {
    nlohmann::ordered_json body;
    body["model"] = backend.model_id;
    auto messages = nlohmann::ordered_json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    if (request.response_format == ResponseFormat::JsonMode) {
        body["response_format"] = {{"type", "json_object"}};
    } else if (request.response_format == ResponseFormat::JsonSchema) {
        // The schema body is advisory for the remote engine; local
        // validation stays authoritative either way.
        nlohmann::ordered_json properties = nlohmann::ordered_json::object();
        auto required = nlohmann::ordered_json::array();
        if (request.schema) {
            for (const auto& field : request.schema->fields) {
                properties[field.key] = {{"type", field.kind == FieldKind::BinaryBit
                                                      ? "integer"
                                                      : field.kind == FieldKind::TextList
                                                            ? "array"
                                                            : field.kind == FieldKind::BitMap
                                                                  ? "object"
                                                                  : "string"}};
                required.push_back(field.key);
            }
        }
        body["response_format"] = {
            {"type", "json_schema"},
            {"json_schema",
             {{"name", "structured_output"},
              {"schema",
               {{"type", "object"}, {"properties", properties}, {"required", required}}}}}};
    }

    nlohmann::json doc = post_json(backend, "/chat/completions", body, timeout_seconds_);

    ChatResponse resp;
    try {
        const auto& choice = doc.at("choices").at(0);
        resp.content = choice.at("message").at("content").get<std::string>();
        std::string finish = choice.value("finish_reason", "stop");
        resp.finish = finish == "length" ? FinishReason::Truncated : FinishReason::Stop;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError("backend '" + backend.name +
                             "' response missing choices/message: " + e.what());
    }
    if (doc.contains("usage")) {
        resp.usage.input_tokens = doc["usage"].value("prompt_tokens", std::uint64_t{0});
        resp.usage.output_tokens = doc["usage"].value("completion_tokens", std::uint64_t{0});
        resp.usage_reported = true;
    } else {
        resp.usage_reported = false;  // gateway fills in the estimate
    }
    return resp;
}

EmbeddingVector HttpTransport::embed(const BackendDescriptor& backend, const std::string& text) {
    nlohmann::ordered_json body;
    body["model"] = backend.model_id;
    body["input"] = text;
    nlohmann::json doc = post_json(backend, "/embeddings", body, timeout_seconds_);
    try {
        return doc.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError("backend '" + backend.name +
                             "' embedding response malformed: " + e.what());
    }
}

}  // namespace picepr
