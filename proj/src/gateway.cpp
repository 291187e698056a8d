#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "hedgeflow/gateway.hpp"

#include "hedgeflow/errors.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace hedgeflow {

using nlohmann::json;

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

// Splits "https://host:port/base/path" into origin and path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw GatewayError("bad endpoint URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public Transport {
public:
    HttpResult post(const std::string& url, const std::string& body,
                    const std::string& api_key) override {
        const auto [origin, path] = split_url(url);
        httplib::Client client(origin);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post(path.empty() ? "/" : path, headers, body, "application/json");
        if (!res) throw GatewayError("transport failure: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }
};

TokenUsage usage_from_response(const json& response) {
    TokenUsage u;
    if (response.contains("usage")) {
        const auto& usage = response["usage"];
        u.in = usage.value("prompt_tokens", 0);
        u.out = usage.value("completion_tokens", 0);
    }
    return u;
}

} // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

std::string fingerprint(const std::string& endpoint, const json& body) {
    // dump() emits object keys in sorted order, which is the canonical form.
    // Temperature is excluded so replay ignores per-run temperature overrides.
    json canonical_body = body;
    canonical_body.erase("temperature");
    const std::string canonical = endpoint + "\n" + canonical_body.dump();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

Gateway::Gateway(Config cfg, std::unique_ptr<Transport> transport, CassetteMode mode,
                 std::string cassette_path)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      mode_(mode),
      cassette_path_(std::move(cassette_path)) {
    if (cfg_.base_url.empty()) cfg_.base_url = env_or("HEDGE_LLM_URL", "");
    if (cfg_.api_key.empty()) cfg_.api_key = env_or("HEDGE_LLM_KEY", "");
    if (mode_ == CassetteMode::Replay) {
        entries_ = load_cassette(cassette_path_);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].kind == "embed") embed_index_[entries_[i].fingerprint] = i;
        }
    } else if (mode_ != CassetteMode::Passthrough && cassette_path_.empty()) {
        throw ConfigError("record mode requires a cassette path");
    }
    if (mode_ != CassetteMode::Replay && !transport_) {
        throw ConfigError("gateway needs a transport outside replay mode");
    }
}

Gateway::~Gateway() {
    try {
        flush();
    } catch (...) {
        // best effort on teardown
    }
}

std::vector<CassetteEntry> Gateway::load_cassette(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GatewayError("cannot open cassette " + path);
    std::vector<CassetteEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        CassetteEntry e;
        e.kind = obj.value("kind", "chat");
        e.fingerprint = obj.at("fingerprint").get<std::string>();
        e.request = obj.at("request");
        e.response = obj.at("response").get<std::string>();
        if (obj.contains("tokens")) {
            e.tokens.in = obj["tokens"].value("in", 0);
            e.tokens.out = obj["tokens"].value("out", 0);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

void Gateway::flush() {
    std::lock_guard<std::mutex> lock(mutex_);
    if (mode_ != CassetteMode::Record || !dirty_) return;
    std::ofstream out(cassette_path_);
    if (!out) throw GatewayError("cannot write cassette " + cassette_path_);
    for (const auto& e : entries_) {
        json obj = {
            {"kind", e.kind},
            {"fingerprint", e.fingerprint},
            {"request", e.request},
            {"response", e.response},
            {"tokens", {{"in", e.tokens.in}, {"out", e.tokens.out}}},
        };
        out << obj.dump() << "\n";
    }
    dirty_ = false;
}

double Gateway::cost() const {
    return static_cast<double>(usage_.in) / 1000.0 * cfg_.price_in_per_1k +
           static_cast<double>(usage_.out) / 1000.0 * cfg_.price_out_per_1k;
}

std::string Gateway::post_with_retry(const std::string& url, const std::string& body) {
    int attempt = 0;
    for (;;) {
        ++network_calls_;
        try {
            const HttpResult res = transport_->post(url, body, cfg_.api_key);
            if (res.status >= 200 && res.status < 300) return res.body;
            throw GatewayError("HTTP " + std::to_string(res.status) + ": " + res.body);
        } catch (const GatewayError&) {
            if (attempt >= cfg_.max_retries) throw;
            const auto delay = std::chrono::milliseconds(100 << attempt);
            std::this_thread::sleep_for(delay);
            ++attempt;
        }
    }
}

void Gateway::append_entry(CassetteEntry entry) {
    usage_.in += entry.tokens.in;
    usage_.out += entry.tokens.out;
    if (entry.kind == "embed") embed_index_[entry.fingerprint] = entries_.size();
    entries_.push_back(std::move(entry));
    dirty_ = true;
}

std::string Gateway::chat(const ChatRequest& request) {
    std::lock_guard<std::mutex> lock(mutex_);
    json body;
    body["model"] = request.model.empty() ? cfg_.chat_model : request.model;
    body["temperature"] = request.temperature;
    body["messages"] = json::array();
    for (const auto& m : request.messages) {
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    const std::string endpoint = "/chat/completions";
    const std::string fp = fingerprint(endpoint, body);

    if (mode_ == CassetteMode::Replay) {
        // Find the next chat entry in sequence.
        while (replay_chat_cursor_ < entries_.size() &&
               entries_[replay_chat_cursor_].kind != "chat") {
            ++replay_chat_cursor_;
        }
        if (replay_chat_cursor_ >= entries_.size()) {
            throw DeterminismError("replay: cassette exhausted; no entry for fingerprint " + fp);
        }
        const CassetteEntry& e = entries_[replay_chat_cursor_];
        if (e.fingerprint != fp) {
            throw DeterminismError("replay: request fingerprint " + fp +
                                   " does not match recorded " + e.fingerprint);
        }
        ++replay_chat_cursor_;
        usage_.in += e.tokens.in;
        usage_.out += e.tokens.out;
        return e.response;
    }

    const std::string raw = post_with_retry(cfg_.base_url + endpoint, body.dump());
    json response;
    std::string text;
    TokenUsage tokens;
    try {
        response = json::parse(raw);
        text = response.at("choices").at(0).at("message").at("content").get<std::string>();
        tokens = usage_from_response(response);
    } catch (const std::exception& e) {
        throw GatewayError(std::string("malformed chat response: ") + e.what());
    }
    if (mode_ == CassetteMode::Record) {
        append_entry({"chat", fp, body, text, tokens});
    } else {
        usage_.in += tokens.in;
        usage_.out += tokens.out;
    }
    return text;
}

std::vector<double> Gateway::embed_remote(const std::string& text) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (text.empty()) throw ValidationError("cannot embed empty text");
    json body;
    body["model"] = cfg_.embed_model;
    body["input"] = text;
    const std::string endpoint = "/embeddings";
    const std::string fp = fingerprint(endpoint, body);

    const auto decode = [](const std::string& payload) {
        const json arr = json::parse(payload);
        std::vector<double> v = arr.get<std::vector<double>>();
        double norm2 = 0;
        for (double x : v) norm2 += x * x;
        if (norm2 > 0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (double& x : v) x *= inv;
        }
        return v;
    };

    // Embeddings are pure functions of the text: serve repeats from the
    // cassette in any mode that has one.
    if (auto it = embed_index_.find(fp); it != embed_index_.end()) {
        const CassetteEntry& e = entries_[it->second];
        return decode(e.response);
    }
    if (mode_ == CassetteMode::Replay) {
        throw DeterminismError("replay: no recorded embedding for fingerprint " + fp);
    }

    const std::string raw = post_with_retry(cfg_.base_url + endpoint, body.dump());
    std::vector<double> vec;
    TokenUsage tokens;
    try {
        const json response = json::parse(raw);
        vec = response.at("data").at(0).at("embedding").get<std::vector<double>>();
        tokens = usage_from_response(response);
    } catch (const std::exception& e) {
        throw GatewayError(std::string("malformed embedding response: ") + e.what());
    }
    if (mode_ == CassetteMode::Record) {
        append_entry({"embed", fp, body, json(vec).dump(), tokens});
    } else {
        usage_.in += tokens.in;
        usage_.out += tokens.out;
    }
    double norm2 = 0;
    for (double x : vec) norm2 += x * x;
    if (norm2 > 0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : vec) x *= inv;
    }
    return vec;
}

} // namespace hedgeflow
