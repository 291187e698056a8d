#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace hedgeflow {

struct ChatMessage {
    std::string role; // system | user | assistant
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
};

struct HttpResult {
    int status = 0;
    std::string body;
};

/// Minimal HTTP POST abstraction so tests can count or fake network calls.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResult post(const std::string& url, const std::string& body,
                            const std::string& api_key) = 0;
};

/// Real transport over cpp-httplib (http/https by URL scheme).
std::unique_ptr<Transport> make_http_transport();

enum class CassetteMode { Record, Replay, Passthrough };

struct TokenUsage {
    std::int64_t in = 0;
    std::int64_t out = 0;
};

/// Stable hex fingerprint of (endpoint, canonicalized request body).
/// nlohmann objects serialize with sorted keys, so semantically equal
/// requests collide regardless of construction order. Temperature is not
/// part of the fingerprint: replayed runs ignore temperature overrides.
std::string fingerprint(const std::string& endpoint, const nlohmann::json& body);

struct CassetteEntry {
    std::string kind; // "chat" | "embed"
    std::string fingerprint;
    nlohmann::json request;
    std::string response; // chat: message text; embed: JSON array of numbers
    TokenUsage tokens;
};

/// HTTP client for chat-completion and embedding endpoints with
/// record/replay cassettes.
///
/// Chat calls are strictly sequence-ordered on replay so nondeterministic
/// call ordering surfaces as an error instead of silently reusing a
/// response. Embedding calls are deterministic functions of their text, so
/// they are additionally indexed by fingerprint: a repeat embed is served
/// from the cassette even in Record mode, and replay looks them up by
/// fingerprint rather than position.
class Gateway {
public:
    struct Config {
        std::string base_url;   // from HEDGE_LLM_URL unless set
        std::string api_key;    // from HEDGE_LLM_KEY unless set
        std::string chat_model = "gpt-4-1106-preview";
        std::string embed_model = "text-embedding-3-large";
        int max_retries = 3;
        // Per-1k-token prices for the run cost summary.
        double price_in_per_1k = 0.0;
        double price_out_per_1k = 0.0;
    };

    Gateway(Config cfg, std::unique_ptr<Transport> transport, CassetteMode mode,
            std::string cassette_path);
    ~Gateway();

    std::string chat(const ChatRequest& request);

    /// Unit-normalized embedding vector.
    std::vector<double> embed_remote(const std::string& text);

    /// Persists the cassette (Record mode). Called by the destructor too.
    void flush();

    const TokenUsage& usage() const { return usage_; }
    double cost() const;
    std::int64_t network_calls() const { return network_calls_; }
    CassetteMode mode() const { return mode_; }
    const Config& config() const { return cfg_; }

    static std::vector<CassetteEntry> load_cassette(const std::string& path);

private:
    Config cfg_;
    std::unique_ptr<Transport> transport_;
    CassetteMode mode_;
    std::string cassette_path_;
    std::mutex mutex_; // serializes cassette access; call order = lock order

    std::vector<CassetteEntry> entries_;
    std::size_t replay_chat_cursor_ = 0;
    std::unordered_map<std::string, std::size_t> embed_index_; // fingerprint -> entry
    TokenUsage usage_;
    std::int64_t network_calls_ = 0;
    bool dirty_ = false;

    std::string post_with_retry(const std::string& url, const std::string& body);
    void append_entry(CassetteEntry entry);
};

} // namespace hedgeflow
