#pragma once

#include "hedgeflow/conferences.hpp"
#include "hedgeflow/market_data.hpp"
#include "hedgeflow/memory.hpp"
#include "hedgeflow/metrics.hpp"
#include "hedgeflow/policy.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hedgeflow {

/// Backtest run configuration (JSON file with a strict key schema).
struct RunConfig {
    // required
    std::string data_dir;
    Date start;
    Date end;
    Date test_start;
    // core knobs
    std::string policy_backend = "buy_and_hold"; // buy_and_hold|tsm|zmr|mv|llm
    std::string cassette;                        // path; empty = no cassette
    std::string cassette_mode;                   // record|replay|passthrough|auto("")
    double fee_bps = 0.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 0.5;
    double alpha = 0.95;
    int bac_cycle_days = 30;
    int reflection_horizon_days = 4;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    // documented optional keys
    double initial_capital = 1'000'000.0;
    std::string execution = "close"; // close | next_open
    int allocator_window_days = 60;
    int esc_rounds = 1;
    std::string model = "gpt-4-1106-preview";
    std::string embed_model = "text-embedding-3-large";
    double temperature = 0.7;
    int embed_dim = 64;
    double risk_free_rate = 0.0;
    double price_in_per_1k = 0.0;
    double price_out_per_1k = 0.0;
    int llm_retries = 3;
    bool retrieval_quota_mode = false; // per-kind quota retrieval
    std::string amplitude_mode = "high_low"; // high_low | close_close
    bool shared_ge = true; // one general-experience store across analysts

    /// Strict parse: unknown keys, missing required keys, and semantic
    /// problems are all collected into one ConfigError.
    static RunConfig from_json_file(const std::string& path);
    static RunConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct Fill {
    enum class Side { Buy, Sell };
    Date date;
    AssetId asset;
    Side side = Side::Buy;
    double quantity = 0;
    double price = 0;
    double cost = 0; // fee paid
};

struct RewardTrace {
    std::vector<double> rewards; // daily portfolio simple returns
    double gamma = 1.0;
    double discounted_sum() const;
};

struct RunArtifacts {
    std::vector<Date> dates;
    std::vector<double> equity;
    std::vector<Fill> fills;
    WeightHistory weights;
    ReturnHistory returns;
    RewardTrace rewards;
    MetricsReport metrics;
    TokenUsage usage;
    double cost = 0.0;
    std::int64_t network_calls = 0;
    std::vector<std::string> warnings;
    std::string out_dir;
};

/// The deterministic daily loop: snapshot -> retrieve -> decide -> EMC
/// check -> execute -> mark-to-market -> scheduled BAC/ESC -> reflections.
class Engine {
public:
    struct Deps {
        // Test injection points; all optional.
        std::unique_ptr<Transport> transport;
        std::function<std::unique_ptr<DecisionBackend>(const AgentProfile&)> backend_factory;
        std::unique_ptr<Embedder> embedder;
    };

    Engine(RunConfig cfg, Dataset data, std::string out_dir, Deps deps = {});
    ~Engine();

    /// Runs the full backtest and writes every run artifact under out_dir.
    RunArtifacts run();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Loads the dataset named by the config and runs the engine.
RunArtifacts run_backtest(const RunConfig& cfg, const std::string& out_dir,
                          Engine::Deps deps = {});

} // namespace hedgeflow
