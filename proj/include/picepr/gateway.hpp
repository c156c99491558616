#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "picepr/errors.hpp"
#include "picepr/structured.hpp"

namespace picepr {

enum class BackendKind { Completions, Embeddings };
enum class OutputStructure { Schema, Mode, Text };

/// One row of the backend roster: where a model lives, what it emits, and
/// (for embedding models) the vector length it is contracted to return.
struct BackendDescriptor {
    std::string name;
    BackendKind kind = BackendKind::Completions;
    OutputStructure output_structure = OutputStructure::Text;
    std::string endpoint;
    std::string model_id;
    std::optional<int> embedding_length;
    std::string api_key_env;  // env var holding the secret; never stored

    void check() const;
};

enum class Role { System, User, Assistant };

std::string role_name(Role role);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

enum class ResponseFormat { FreeText, JsonMode, JsonSchema };

struct ChatRequest {
    std::string backend;  // BackendDescriptor name
    std::vector<ChatMessage> messages;
    ResponseFormat response_format = ResponseFormat::FreeText;
    std::optional<OutputSchema> schema;  // required iff response_format == JsonSchema
    double temperature = 0.2;
    int max_output_tokens = 1024;
};

enum class FinishReason { Stop, Truncated, Error };

struct TokenUsage {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;

    TokenUsage& operator+=(const TokenUsage& other) {
        input_tokens += other.input_tokens;
        output_tokens += other.output_tokens;
        return *this;
    }
};

struct ChatResponse {
    std::string content;
    FinishReason finish = FinishReason::Stop;
    TokenUsage usage;
    bool usage_reported = true;  // false when usage was estimated locally
};

using EmbeddingVector = std::vector<double>;

/// ceil(bytes / 4). The documented estimate used when a backend does not
/// report token usage; it feeds cost reporting only.
std::uint64_t estimate_tokens(const std::string& text);
std::uint64_t estimate_input_tokens(const std::vector<ChatMessage>& messages);

/// Raw wire access to one backend. Implementations do a single attempt;
/// retry, caching and accounting live in the Gateway.
class Transport {
public:
    virtual ~Transport() = default;
    virtual ChatResponse complete(const BackendDescriptor& backend, const ChatRequest& request) = 0;
    virtual EmbeddingVector embed(const BackendDescriptor& backend, const std::string& text) = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    int initial_delay_ms = 500;
    double multiplier = 2.0;
};

/// Content-addressed response cache: one file per key, write-once. Keys are
/// SHA-256 hex strings, so concurrent writers of the same request are
/// harmless duplicates.
class CacheStore {
public:
    explicit CacheStore(std::filesystem::path dir);

    std::optional<std::string> load(const std::string& key) const;
    void store(const std::string& key, const std::string& payload) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

/// Deterministic content-addressed key over (backend name, model id,
/// messages, response format, temperature).
std::string cache_key(const BackendDescriptor& backend, const ChatRequest& request);
std::string embed_cache_key(const BackendDescriptor& backend, const std::string& text);

struct GatewayStats {
    std::map<std::string, std::uint64_t> transport_calls;  // per backend, cache misses only
    std::map<std::string, std::uint64_t> cache_hits;
    std::map<std::string, TokenUsage> usage_per_backend;  // non-cached responses only
    TokenUsage usage;                                     // total over all backends

    std::uint64_t calls(const std::string& backend) const {
        auto it = transport_calls.find(backend);
        return it == transport_calls.end() ? 0 : it->second;
    }
    std::uint64_t total_calls() const {
        std::uint64_t n = 0;
        for (const auto& [_, v] : transport_calls) n += v;
        return n;
    }
};

/// Shared client layer for every completion and embedding backend. Validates
/// request/backend compatibility before any wire traffic, retries transient
/// transport failures with exponential backoff, serves repeated requests
/// from the cache with zero new usage, and bounds in-flight requests per
/// backend. Thread-safe.
class Gateway {
public:
    Gateway() = default;

    void register_backend(BackendDescriptor descriptor, std::shared_ptr<Transport> transport);
    const BackendDescriptor& descriptor(const std::string& name) const;
    bool has_backend(const std::string& name) const;

    void set_cache(std::shared_ptr<CacheStore> cache) { cache_ = std::move(cache); }
    void set_retry_policy(RetryPolicy policy) { retry_ = policy; }
    void set_max_in_flight(int per_backend);

    ChatResponse complete(const ChatRequest& request);
    EmbeddingVector embed(const std::string& backend_name, const std::string& text);

    GatewayStats stats() const;
    void reset_stats();

private:
    struct Entry {
        BackendDescriptor descriptor;
        std::shared_ptr<Transport> transport;
        std::unique_ptr<std::mutex> slot_mutex;      // guards in_flight + cv
        std::unique_ptr<std::condition_variable> cv;
        int in_flight = 0;
    };

    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::map<std::string, Entry> backends_;
    std::shared_ptr<CacheStore> cache_;
    RetryPolicy retry_;
    int max_in_flight_ = 4;
    mutable std::mutex stats_mutex_;
    GatewayStats stats_;
};

}  // namespace picepr
