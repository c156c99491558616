#include "picepr/gateway.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "picepr/util.hpp"

namespace picepr {

void BackendDescriptor::check() const {
    if (name.empty()) throw ConfigError("backend name must not be empty");
    if (kind == BackendKind::Embeddings) {
        if (!embedding_length || *embedding_length < 1) {
            throw ConfigError("embeddings backend '" + name + "' needs embedding_length >= 1");
        }
        if (output_structure != OutputStructure::Text) {
            throw ConfigError("backend '" + name +
                              "': Schema/Mode output structure is a completions property");
        }
    } else if (embedding_length) {
        throw ConfigError("completions backend '" + name + "' must not set embedding_length");
    }
}

std::string role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

std::uint64_t estimate_tokens(const std::string& text) {
    return (text.size() + 3) / 4;
}

std::uint64_t estimate_input_tokens(const std::vector<ChatMessage>& messages) {
    std::uint64_t total = 0;
    for (const auto& m : messages) total += estimate_tokens(m.content);
    return total;
}

namespace {

const char* format_name(ResponseFormat f) {
    switch (f) {
        case ResponseFormat::FreeText: return "free_text";
        case ResponseFormat::JsonMode: return "json_mode";
        case ResponseFormat::JsonSchema: return "json_schema";
    }
    return "free_text";
}

std::string schema_fingerprint(const OutputSchema& schema) {
    std::ostringstream os;
    for (const auto& f : schema.fields) {
        os << f.key << ':' << static_cast<int>(f.kind) << ';';
        for (const auto& l : f.allowed_letters) os << l << ',';
        for (const auto& k : f.bitmap_keys) os << k << ',';
        os << '|';
    }
    return os.str();
}

void validate_request(const BackendDescriptor& backend, const ChatRequest& request) {
    if (backend.kind != BackendKind::Completions) {
        throw BackendRejectedFormat("backend '" + backend.name + "' is not a completions model");
    }
    bool has_user = false;
    for (const auto& m : request.messages) {
        if (m.role == Role::User) has_user = true;
    }
    if (!has_user) {
        throw BackendRejectedFormat("chat request needs at least one user message");
    }
    if (request.response_format == ResponseFormat::JsonSchema) {
        if (backend.output_structure != OutputStructure::Schema) {
            throw BackendRejectedFormat("backend '" + backend.name +
                                        "' does not support json_schema output");
        }
        if (!request.schema) {
            throw BackendRejectedFormat("json_schema request carries no schema");
        }
    }
    if (request.response_format == ResponseFormat::JsonMode &&
        backend.output_structure == OutputStructure::Text) {
        throw BackendRejectedFormat("backend '" + backend.name +
                                    "' does not support json_mode output");
    }
    if (request.temperature < 0.0) {
        throw BackendRejectedFormat("temperature must be >= 0");
    }
    if (request.max_output_tokens <= 0) {
        throw BackendRejectedFormat("max_output_tokens must be positive");
    }
}

// Bounded in-flight slot per backend; plain mutex/cv keeps it header-free.
class SlotGuard {
public:
    SlotGuard(std::mutex& m, std::condition_variable& cv, int& count, int limit)
        : mutex_(m), cv_(cv), count_(count) {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return count_ < limit; });
        ++count_;
    }
    ~SlotGuard() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            --count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex& mutex_;
    std::condition_variable& cv_;
    int& count_;
};

const char* finish_name(FinishReason f) {
    switch (f) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Truncated: return "truncated";
        case FinishReason::Error: return "error";
    }
    return "stop";
}

FinishReason finish_from_name(const std::string& s) {
    if (s == "truncated") return FinishReason::Truncated;
    if (s == "error") return FinishReason::Error;
    return FinishReason::Stop;
}

}  // namespace

CacheStore::CacheStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::optional<std::string> CacheStore::load(const std::string& key) const {
    auto path = dir_ / (key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void CacheStore::store(const std::string& key, const std::string& payload) const {
    auto path = dir_ / (key + ".json");
    if (std::filesystem::exists(path)) return;  // write-once by key
    auto tmp = dir_ / (key + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << payload;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
}

std::string cache_key(const BackendDescriptor& backend, const ChatRequest& request) {
    nlohmann::ordered_json j;
    j["backend"] = backend.name;
    j["model_id"] = backend.model_id;
    auto msgs = nlohmann::ordered_json::array();
    for (const auto& m : request.messages) {
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    j["messages"] = std::move(msgs);
    j["response_format"] = format_name(request.response_format);
    if (request.response_format == ResponseFormat::JsonSchema && request.schema) {
        j["schema"] = schema_fingerprint(*request.schema);
    }
    j["temperature"] = request.temperature;
    return sha256_hex(j.dump());
}

std::string embed_cache_key(const BackendDescriptor& backend, const std::string& text) {
    nlohmann::ordered_json j;
    j["backend"] = backend.name;
    j["model_id"] = backend.model_id;
    j["op"] = "embed";
    j["text"] = text;
    return sha256_hex(j.dump());
}

void Gateway::register_backend(BackendDescriptor descriptor, std::shared_ptr<Transport> transport) {
    descriptor.check();
    Entry e;
    std::string name = descriptor.name;
    e.descriptor = std::move(descriptor);
    e.transport = std::move(transport);
    e.slot_mutex = std::make_unique<std::mutex>();
    e.cv = std::make_unique<std::condition_variable>();
    backends_[name] = std::move(e);
}

Gateway::Entry& Gateway::entry(const std::string& name) {
    auto it = backends_.find(name);
    if (it == backends_.end()) throw ConfigError("unknown backend '" + name + "'");
    return it->second;
}

const Gateway::Entry& Gateway::entry(const std::string& name) const {
    auto it = backends_.find(name);
    if (it == backends_.end()) throw ConfigError("unknown backend '" + name + "'");
    return it->second;
}

const BackendDescriptor& Gateway::descriptor(const std::string& name) const {
    return entry(name).descriptor;
}

bool Gateway::has_backend(const std::string& name) const {
    return backends_.count(name) > 0;
}

void Gateway::set_max_in_flight(int per_backend) {
    max_in_flight_ = per_backend > 0 ? per_backend : 1;
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    Entry& e = entry(request.backend);
    validate_request(e.descriptor, request);

    const std::string key = cache_key(e.descriptor, request);
    if (cache_) {
        if (auto hit = cache_->load(key)) {
            auto doc = nlohmann::json::parse(*hit);
            ChatResponse resp;
            resp.content = doc.at("content").get<std::string>();
            resp.finish = finish_from_name(doc.at("finish").get<std::string>());
            resp.usage.input_tokens = doc.at("usage").at("input_tokens").get<std::uint64_t>();
            resp.usage.output_tokens = doc.at("usage").at("output_tokens").get<std::uint64_t>();
            resp.usage_reported = doc.value("usage_reported", true);
            std::lock_guard<std::mutex> lock(stats_mutex_);
            ++stats_.cache_hits[request.backend];
            return resp;  // cache hits add no new usage
        }
    }

    ChatResponse resp;
    {
        SlotGuard slot(*e.slot_mutex, *e.cv, e.in_flight, max_in_flight_);
        int delay_ms = retry_.initial_delay_ms;
        for (int attempt = 0;; ++attempt) {
            try {
                resp = e.transport->complete(e.descriptor, request);
                break;
            } catch (const RateLimited&) {
                if (attempt >= retry_.max_retries) throw;
            } catch (const TransportError&) {
                if (attempt >= retry_.max_retries) throw;
            }
            if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms = static_cast<int>(delay_ms * retry_.multiplier);
        }
    }

    if (resp.usage.input_tokens == 0 && resp.usage.output_tokens == 0 && !resp.usage_reported) {
        resp.usage.input_tokens = estimate_input_tokens(request.messages);
        resp.usage.output_tokens = estimate_tokens(resp.content);
    }

    {
        std::lock_guard<std::mutex> lock(stats_mutex_);
        ++stats_.transport_calls[request.backend];
        stats_.usage_per_backend[request.backend] += resp.usage;
        stats_.usage += resp.usage;
    }

    if (cache_) {
        nlohmann::ordered_json doc;
        doc["content"] = resp.content;
        doc["finish"] = finish_name(resp.finish);
        doc["usage"] = {{"input_tokens", resp.usage.input_tokens},
                        {"output_tokens", resp.usage.output_tokens}};
        doc["usage_reported"] = resp.usage_reported;
        cache_->store(key, doc.dump());
    }
    return resp;
}

EmbeddingVector Gateway::embed(const std::string& backend_name, const std::string& text) {
    Entry& e = entry(backend_name);
    if (e.descriptor.kind != BackendKind::Embeddings) {
        throw BackendRejectedFormat("backend '" + backend_name + "' is not an embeddings model");
    }

    const std::string key = embed_cache_key(e.descriptor, text);
    if (cache_) {
        if (auto hit = cache_->load(key)) {
            auto doc = nlohmann::json::parse(*hit);
            std::lock_guard<std::mutex> lock(stats_mutex_);
            ++stats_.cache_hits[backend_name];
            return doc.at("vector").get<EmbeddingVector>();
        }
    }

    EmbeddingVector vec;
    {
        SlotGuard slot(*e.slot_mutex, *e.cv, e.in_flight, max_in_flight_);
        int delay_ms = retry_.initial_delay_ms;
        for (int attempt = 0;; ++attempt) {
            try {
                vec = e.transport->embed(e.descriptor, text);
                break;
            } catch (const RateLimited&) {
                if (attempt >= retry_.max_retries) throw;
            } catch (const TransportError&) {
                if (attempt >= retry_.max_retries) throw;
            }
            if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms = static_cast<int>(delay_ms * retry_.multiplier);
        }
    }

    if (static_cast<int>(vec.size()) != *e.descriptor.embedding_length) {
        throw DimensionMismatch("backend '" + backend_name + "' returned vector of length " +
                                std::to_string(vec.size()) + ", expected " +
                                std::to_string(*e.descriptor.embedding_length));
    }

    {
        std::lock_guard<std::mutex> lock(stats_mutex_);
        ++stats_.transport_calls[backend_name];
        std::uint64_t tokens = estimate_tokens(text);
        stats_.usage_per_backend[backend_name].input_tokens += tokens;
        stats_.usage.input_tokens += tokens;
    }

    if (cache_) {
        nlohmann::ordered_json doc;
        doc["vector"] = vec;
        cache_->store(key, doc.dump());
    }
    return vec;
}

GatewayStats Gateway::stats() const {
    std::lock_guard<std::mutex> lock(stats_mutex_);
    return stats_;
}

void Gateway::reset_stats() {
    std::lock_guard<std::mutex> lock(stats_mutex_);
    stats_ = GatewayStats{};
}

}  // namespace picepr
