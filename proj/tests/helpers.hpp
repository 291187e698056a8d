#pragma once

#include "hedgeflow/embedder.hpp"
#include "hedgeflow/gateway.hpp"
#include "hedgeflow/market_data.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace hedgeflow::testing {

inline std::vector<Bar> make_bars(const std::vector<double>& closes, Date start,
                                  int step_days = 1, double volume = 1000.0) {
    std::vector<Bar> bars;
    double prev = closes.empty() ? 0.0 : closes.front();
    Date d = start;
    for (double c : closes) {
        Bar b;
        b.date = d;
        b.open = prev;
        b.close = c;
        b.high = std::max(b.open, b.close);
        b.low = std::min(b.open, b.close);
        b.adj_close = c;
        b.volume = volume;
        bars.push_back(b);
        prev = c;
        d = d.plus_days(step_days);
    }
    return bars;
}

inline std::string temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("hedgeflow_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir.string();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fake LLM endpoint: chat replies come from a user-supplied function of the
/// prompt; embeddings are served by a hashing embedder. Counts every post.
class FakeLlmTransport final : public Transport {
public:
    using ChatFn = std::function<std::string(const std::string& prompt)>;

    explicit FakeLlmTransport(ChatFn chat_fn, std::size_t embed_dim = 64)
        : chat_fn_(std::move(chat_fn)), embedder_(embed_dim, 0x5eedull) {}

    HttpResult post(const std::string& url, const std::string& body, const std::string&) override {
        ++calls_;
        const auto req = nlohmann::json::parse(body);
        if (url.find("/embeddings") != std::string::npos) {
            const auto vec = embedder_.embed(req.at("input").get<std::string>());
            nlohmann::json res = {
                {"data", {{{"embedding", vec}}}},
                {"usage", {{"prompt_tokens", 1}, {"completion_tokens", 0}}},
            };
            return {200, res.dump()};
        }
        std::string prompt;
        for (const auto& m : req.at("messages")) {
            prompt += m.at("content").get<std::string>();
        }
        nlohmann::json res = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", chat_fn_(prompt)}}}}}},
            {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 5}}},
        };
        return {200, res.dump()};
    }

    int calls() const { return calls_; }

private:
    ChatFn chat_fn_;
    HashingEmbedder embedder_;
    int calls_ = 0;
};

/// Transport that must never be reached (replay-mode zero-network checks).
class CountingDeadTransport final : public Transport {
public:
    HttpResult post(const std::string&, const std::string&, const std::string&) override {
        ++calls_;
        return {500, "network should not be touched"};
    }
    int calls() const { return calls_; }

private:
    int calls_ = 0;
};

} // namespace hedgeflow::testing
