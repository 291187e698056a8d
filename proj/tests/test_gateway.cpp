#include "hedgeflow/gateway.hpp"

#include "hedgeflow/errors.hpp"
#include "helpers.hpp"

#include <doctest.h>

using namespace hedgeflow;
using namespace hedgeflow::testing;
using nlohmann::json;

namespace {

ChatRequest simple_request(const std::string& content) {
    ChatRequest req;
    req.model = "test-model";
    req.temperature = 0.7;
    req.messages.push_back({"user", content});
    return req;
}

} // namespace

TEST_CASE("fingerprint canonicalizes key order") {
    json a;
    a["model"] = "m";
    a["temperature"] = 0.7;
    json b;
    b["temperature"] = 0.7;
    b["model"] = "m";
    CHECK(fingerprint("/chat/completions", a) == fingerprint("/chat/completions", b));
    CHECK(fingerprint("/chat/completions", a) != fingerprint("/embeddings", a));
}

TEST_CASE("record then replay returns byte-identical responses") {
    const auto dir = temp_dir("cassette");
    const std::string cassette = dir + "/run.jsonl";
    {
        auto transport = std::make_unique<FakeLlmTransport>(
            [](const std::string& prompt) { return "echo: " + prompt.substr(0, 16); });
        Gateway gw({.base_url = "http://fake"}, std::move(transport), CassetteMode::Record,
                   cassette);
        CHECK(gw.chat(simple_request("first")) == "echo: first");
        CHECK(gw.chat(simple_request("second")) == "echo: second");
        CHECK(gw.usage().in == 20);
        CHECK(gw.usage().out == 10);
        gw.flush();
    }
    {
        auto dead = std::make_unique<CountingDeadTransport>();
        auto* dead_ptr = dead.get();
        Gateway gw({.base_url = "http://fake"}, std::move(dead), CassetteMode::Replay, cassette);
        CHECK(gw.chat(simple_request("first")) == "echo: first");
        CHECK(gw.chat(simple_request("second")) == "echo: second");
        CHECK(dead_ptr->calls() == 0);
        CHECK(gw.network_calls() == 0);
    }
}

TEST_CASE("replay with an altered prompt raises a determinism violation") {
    const auto dir = temp_dir("cassette_mismatch");
    const std::string cassette = dir + "/run.jsonl";
    {
        auto transport =
            std::make_unique<FakeLlmTransport>([](const std::string&) { return "ok"; });
        Gateway gw({.base_url = "http://fake"}, std::move(transport), CassetteMode::Record,
                   cassette);
        gw.chat(simple_request("original"));
        gw.flush();
    }
    Gateway gw({.base_url = "http://fake"}, nullptr, CassetteMode::Replay, cassette);
    CHECK_THROWS_AS(gw.chat(simple_request("altered")), DeterminismError);
}

TEST_CASE("replay of an exhausted cassette raises a determinism violation") {
    const auto dir = temp_dir("cassette_exhausted");
    const std::string cassette = dir + "/run.jsonl";
    {
        auto transport =
            std::make_unique<FakeLlmTransport>([](const std::string&) { return "ok"; });
        Gateway gw({.base_url = "http://fake"}, std::move(transport), CassetteMode::Record,
                   cassette);
        gw.chat(simple_request("only"));
        gw.flush();
    }
    Gateway gw({.base_url = "http://fake"}, nullptr, CassetteMode::Replay, cassette);
    gw.chat(simple_request("only"));
    CHECK_THROWS_AS(gw.chat(simple_request("only")), DeterminismError);
}

TEST_CASE("repeat embeddings are served from the cassette without network I/O") {
    const auto dir = temp_dir("cassette_embed");
    const std::string cassette = dir + "/run.jsonl";
    auto transport = std::make_unique<FakeLlmTransport>([](const std::string&) { return "x"; });
    auto* transport_ptr = transport.get();
    Gateway gw({.base_url = "http://fake"}, std::move(transport), CassetteMode::Record, cassette);

    const auto v1 = gw.embed_remote("same text");
    const int calls_after_first = transport_ptr->calls();
    const auto v2 = gw.embed_remote("same text");
    CHECK(transport_ptr->calls() == calls_after_first); // no second network call
    CHECK(v1 == v2);

    double norm = 0;
    for (double x : v1) norm += x * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));

    gw.flush();
    // Replay sees the single recorded embedding by fingerprint.
    Gateway replay({.base_url = "http://fake"}, nullptr, CassetteMode::Replay, cassette);
    CHECK(replay.embed_remote("same text") == v1);
    CHECK_THROWS_AS(replay.embed_remote("different text"), DeterminismError);
}

TEST_CASE("gateway cost uses the configured price table") {
    const auto dir = temp_dir("cassette_cost");
    auto transport = std::make_unique<FakeLlmTransport>([](const std::string&) { return "r"; });
    Gateway::Config cfg;
    cfg.base_url = "http://fake";
    cfg.price_in_per_1k = 0.01;
    cfg.price_out_per_1k = 0.03;
    Gateway gw(cfg, std::move(transport), CassetteMode::Record, dir + "/c.jsonl");
    gw.chat(simple_request("hello"));
    // 10 in, 5 out per fake call
    CHECK(gw.cost() == doctest::Approx(10.0 / 1000 * 0.01 + 5.0 / 1000 * 0.03));
}

TEST_CASE("replay ignores per-run temperature overrides") {
    const auto dir = temp_dir("cassette_temp");
    const std::string cassette = dir + "/run.jsonl";
    {
        auto transport =
            std::make_unique<FakeLlmTransport>([](const std::string&) { return "ok"; });
        Gateway gw({.base_url = "http://fake"}, std::move(transport), CassetteMode::Record,
                   cassette);
        ChatRequest req = simple_request("prompt");
        req.temperature = 0.7;
        gw.chat(req);
        gw.flush();
    }
    Gateway gw({.base_url = "http://fake"}, nullptr, CassetteMode::Replay, cassette);
    ChatRequest req = simple_request("prompt");
    req.temperature = 0.2; // different temperature, same fingerprint
    CHECK(gw.chat(req) == "ok");
}

TEST_CASE("transport failures retry with backoff up to the configured cap") {
    class FlakyTransport final : public Transport {
    public:
        explicit FlakyTransport(int failures) : failures_left_(failures) {}
        HttpResult post(const std::string&, const std::string&, const std::string&) override {
            ++calls_;
            if (failures_left_-- > 0) return {500, "transient"};
            return {200,
                    nlohmann::json{{"choices", {{{"message", {{"content", "late ok"}}}}}}}.dump()};
        }
        int calls() const { return calls_; }

    private:
        int failures_left_;
        int calls_ = 0;
    };

    const auto dir = temp_dir("retry");
    SUBCASE("recovers when a retry succeeds") {
        auto transport = std::make_unique<FlakyTransport>(2);
        auto* ptr = transport.get();
        Gateway::Config cfg;
        cfg.base_url = "http://fake";
        cfg.max_retries = 3;
        Gateway gw(cfg, std::move(transport), CassetteMode::Record, dir + "/a.jsonl");
        CHECK(gw.chat(simple_request("x")) == "late ok");
        CHECK(ptr->calls() == 3);
    }
    SUBCASE("gives up after the cap") {
        auto transport = std::make_unique<FlakyTransport>(100);
        auto* ptr = transport.get();
        Gateway::Config cfg;
        cfg.base_url = "http://fake";
        cfg.max_retries = 2;
        Gateway gw(cfg, std::move(transport), CassetteMode::Record, dir + "/b.jsonl");
        CHECK_THROWS_AS(gw.chat(simple_request("x")), GatewayError);
        CHECK(ptr->calls() == 3); // initial try plus two retries
    }
}

TEST_CASE("a five-asset problem with a degenerate optimum does not false-alarm") {
    // regression guard: no grid fallback above dimension four, and the
    // uniform start is already optimal here
    hedgeflow::AllocationProblem p;
    p.rho.assign(5, 0.01);
    p.cov.assign(5, std::vector<double>(5, 0.0));
    for (int i = 0; i < 5; ++i) p.cov[i][i] = 0.0001;
    p.lambda1 = 1.0;
    p.lambda2 = 0.0;
    const auto w = hedgeflow::optimize(p);
    for (double x : w.omega) CHECK(x == doctest::Approx(0.2).epsilon(1e-6));
}
