#include "hedgeflow/engine.hpp"

#include "hedgeflow/allocator.hpp"
#include "hedgeflow/errors.hpp"
#include "hedgeflow/indicators.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace hedgeflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr AssetClass kClassOrder[] = {AssetClass::Crypto, AssetClass::Equity, AssetClass::Forex};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Config parsing

struct KeySpec {
    const char* name;
    enum class Type { String, Number, Integer, Boolean } type;
    bool required;
};

constexpr KeySpec kConfigKeys[] = {
    {"data_dir", KeySpec::Type::String, true},
    {"start", KeySpec::Type::String, true},
    {"end", KeySpec::Type::String, true},
    {"test_start", KeySpec::Type::String, true},
    {"policy_backend", KeySpec::Type::String, false},
    {"cassette", KeySpec::Type::String, false},
    {"cassette_mode", KeySpec::Type::String, false},
    {"fee_bps", KeySpec::Type::Number, false},
    {"lambda1", KeySpec::Type::Number, false},
    {"lambda2", KeySpec::Type::Number, false},
    {"lambda3", KeySpec::Type::Number, false},
    {"alpha", KeySpec::Type::Number, false},
    {"bac_cycle_days", KeySpec::Type::Integer, false},
    {"reflection_horizon_days", KeySpec::Type::Integer, false},
    {"gamma", KeySpec::Type::Number, false},
    {"seed", KeySpec::Type::Integer, false},
    {"initial_capital", KeySpec::Type::Number, false},
    {"execution", KeySpec::Type::String, false},
    {"allocator_window_days", KeySpec::Type::Integer, false},
    {"esc_rounds", KeySpec::Type::Integer, false},
    {"model", KeySpec::Type::String, false},
    {"embed_model", KeySpec::Type::String, false},
    {"temperature", KeySpec::Type::Number, false},
    {"embed_dim", KeySpec::Type::Integer, false},
    {"risk_free_rate", KeySpec::Type::Number, false},
    {"price_in_per_1k", KeySpec::Type::Number, false},
    {"price_out_per_1k", KeySpec::Type::Number, false},
    {"llm_retries", KeySpec::Type::Integer, false},
    {"retrieval_quota_mode", KeySpec::Type::Boolean, false},
    {"amplitude_mode", KeySpec::Type::String, false},
    {"shared_ge", KeySpec::Type::Boolean, false},
};

// Maps the gateway's embedding endpoint behind the Embedder interface.
class GatewayEmbedder final : public Embedder {
public:
    GatewayEmbedder(Gateway& gw, std::size_t dim) : gw_(gw), dim_(dim) {}
    std::vector<double> embed(const std::string& text) override { return gw_.embed_remote(text); }
    std::size_t dim() const override { return dim_; }

private:
    Gateway& gw_;
    std::size_t dim_;
};

} // namespace

RunConfig RunConfig::from_json(const json& doc) {
    std::vector<std::string> errors;
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    for (const auto& [key, value] : doc.items()) {
        bool known = false;
        for (const auto& spec : kConfigKeys) {
            if (key == spec.name) {
                known = true;
                switch (spec.type) {
                    case KeySpec::Type::String:
                        if (!value.is_string()) errors.push_back(key + " must be a string");
                        break;
                    case KeySpec::Type::Number:
                        if (!value.is_number()) errors.push_back(key + " must be a number");
                        break;
                    case KeySpec::Type::Integer:
                        if (!value.is_number_integer()) {
                            errors.push_back(key + " must be an integer");
                        }
                        break;
                    case KeySpec::Type::Boolean:
                        if (!value.is_boolean()) errors.push_back(key + " must be a boolean");
                        break;
                }
                break;
            }
        }
        if (!known) errors.push_back("unknown config key '" + key + "'");
    }
    for (const auto& spec : kConfigKeys) {
        if (spec.required && !doc.contains(spec.name)) {
            errors.push_back(std::string("missing required key '") + spec.name + "'");
        }
    }
    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }

    RunConfig cfg;
    const auto date_of = [&](const char* key, Date& out) {
        try {
            out = Date::parse(doc.at(key).get<std::string>());
        } catch (const std::exception& e) {
            errors.push_back(std::string(key) + ": " + e.what());
        }
    };
    cfg.data_dir = doc.at("data_dir").get<std::string>();
    date_of("start", cfg.start);
    date_of("end", cfg.end);
    date_of("test_start", cfg.test_start);
    const auto opt = [&](const char* key, auto& out) {
        if (doc.contains(key)) out = doc.at(key).get<std::decay_t<decltype(out)>>();
    };
    opt("policy_backend", cfg.policy_backend);
    opt("cassette", cfg.cassette);
    opt("cassette_mode", cfg.cassette_mode);
    opt("fee_bps", cfg.fee_bps);
    opt("lambda1", cfg.lambda1);
    opt("lambda2", cfg.lambda2);
    opt("lambda3", cfg.lambda3);
    opt("alpha", cfg.alpha);
    opt("bac_cycle_days", cfg.bac_cycle_days);
    opt("reflection_horizon_days", cfg.reflection_horizon_days);
    opt("gamma", cfg.gamma);
    opt("seed", cfg.seed);
    opt("initial_capital", cfg.initial_capital);
    opt("execution", cfg.execution);
    opt("allocator_window_days", cfg.allocator_window_days);
    opt("esc_rounds", cfg.esc_rounds);
    opt("model", cfg.model);
    opt("embed_model", cfg.embed_model);
    opt("temperature", cfg.temperature);
    opt("embed_dim", cfg.embed_dim);
    opt("risk_free_rate", cfg.risk_free_rate);
    opt("price_in_per_1k", cfg.price_in_per_1k);
    opt("price_out_per_1k", cfg.price_out_per_1k);
    opt("llm_retries", cfg.llm_retries);
    opt("retrieval_quota_mode", cfg.retrieval_quota_mode);
    opt("amplitude_mode", cfg.amplitude_mode);
    opt("shared_ge", cfg.shared_ge);

    if (errors.empty()) {
        if (cfg.start > cfg.test_start) errors.push_back("start must be <= test_start");
        if (cfg.test_start > cfg.end) errors.push_back("test_start must be <= end");
    }
    if (!is_rule_backend(cfg.policy_backend) && cfg.policy_backend != "llm") {
        errors.push_back("policy_backend must be one of buy_and_hold|tsm|zmr|mv|llm");
    }
    if (!cfg.cassette_mode.empty() && cfg.cassette_mode != "record" &&
        cfg.cassette_mode != "replay" && cfg.cassette_mode != "passthrough") {
        errors.push_back("cassette_mode must be record|replay|passthrough");
    }
    if (cfg.fee_bps < 0) errors.push_back("fee_bps must be >= 0");
    if (!(cfg.alpha > 0 && cfg.alpha < 1)) errors.push_back("alpha must lie in (0, 1)");
    if (cfg.lambda1 < 0 || cfg.lambda2 < 0) errors.push_back("lambdas must be >= 0");
    if (cfg.lambda3 < 0 || cfg.lambda3 > 1) errors.push_back("lambda3 must lie in [0, 1]");
    if (!(cfg.gamma > 0 && cfg.gamma <= 1)) errors.push_back("gamma must lie in (0, 1]");
    if (cfg.bac_cycle_days < 1) errors.push_back("bac_cycle_days must be >= 1");
    if (cfg.reflection_horizon_days < 1) errors.push_back("reflection_horizon_days must be >= 1");
    if (cfg.initial_capital <= 0) errors.push_back("initial_capital must be > 0");
    if (cfg.execution != "close" && cfg.execution != "next_open") {
        errors.push_back("execution must be close|next_open");
    }
    if (cfg.allocator_window_days < 20) errors.push_back("allocator_window_days must be >= 20");
    if (cfg.esc_rounds < 1) errors.push_back("esc_rounds must be >= 1");
    if (cfg.embed_dim < 1) errors.push_back("embed_dim must be >= 1");
    if (cfg.llm_retries < 0) errors.push_back("llm_retries must be >= 0");
    if (cfg.amplitude_mode != "high_low" && cfg.amplitude_mode != "close_close") {
        errors.push_back("amplitude_mode must be high_low|close_close");
    }

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return from_json(doc);
}

json RunConfig::to_json() const {
    return json{
        {"data_dir", data_dir},
        {"start", start.to_string()},
        {"end", end.to_string()},
        {"test_start", test_start.to_string()},
        {"policy_backend", policy_backend},
        {"cassette", cassette},
        {"cassette_mode", cassette_mode},
        {"fee_bps", fee_bps},
        {"lambda1", lambda1},
        {"lambda2", lambda2},
        {"lambda3", lambda3},
        {"alpha", alpha},
        {"bac_cycle_days", bac_cycle_days},
        {"reflection_horizon_days", reflection_horizon_days},
        {"gamma", gamma},
        {"seed", seed},
        {"initial_capital", initial_capital},
        {"execution", execution},
        {"allocator_window_days", allocator_window_days},
        {"esc_rounds", esc_rounds},
        {"model", model},
        {"embed_model", embed_model},
        {"temperature", temperature},
        {"embed_dim", embed_dim},
        {"risk_free_rate", risk_free_rate},
        {"price_in_per_1k", price_in_per_1k},
        {"price_out_per_1k", price_out_per_1k},
        {"llm_retries", llm_retries},
        {"retrieval_quota_mode", retrieval_quota_mode},
        {"amplitude_mode", amplitude_mode},
        {"shared_ge", shared_ge},
    };
}

double RewardTrace::discounted_sum() const {
    double acc = 0;
    double g = 1.0;
    for (double r : rewards) {
        acc += g * r;
        g *= gamma;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Engine internals

struct AgentState {
    AgentProfile profile;
    std::vector<AssetId> assets; // this class's assets, manifest order
    std::unique_ptr<MemoryStore> mi;
    std::unique_ptr<MemoryStore> ir;
    std::shared_ptr<MemoryStore> ge; // shared across agents unless configured off
    std::unique_ptr<DecisionBackend> backend;
};

struct PendingReflection {
    std::size_t agent_idx;
    Action action;
    Date decision_date;
    std::size_t due_step; // index into the run calendar
    double entry_close;
};

struct PendingOrder { // next_open execution mode
    std::size_t agent_idx;
    Action action;
    Date decided;
};

struct ClassCycleBook {
    double mv_start = 0;   // class market value at cycle start
    double buys = 0;       // cash outlays (fees included)
    double proceeds = 0;   // sale proceeds (net of fees)
};

struct Engine::Impl {
    RunConfig cfg;
    Dataset data;
    std::string out_dir;
    Deps deps;

    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Embedder> embedder;
    std::vector<AgentState> agents;
    std::shared_ptr<MemoryStore> shared_ge;

    // portfolio
    double cash = 0;
    std::map<std::string, double> positions;
    std::array<double, 3> class_budget{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::array<ClassCycleBook, 3> cycle_book{};
    double cycle_start_value = 0;

    // run calendar and bookkeeping
    std::vector<Date> run_dates;
    std::vector<Date> bac_dates; // aligned, consumed front to back
    std::size_t next_bac = 0;
    Date last_bac_date;
    bool had_bac = false;

    std::vector<Date> dates_out;
    std::vector<double> equity;
    std::vector<Fill> fills;
    WeightHistory weight_hist;
    ReturnHistory return_hist;
    std::vector<std::size_t> cycle_starts;
    std::vector<PendingReflection> pending_reflections;
    std::vector<PendingOrder> pending_orders;
    std::vector<std::string> warnings;

    std::ofstream conf_log;
    std::ofstream transcript_log;

    explicit Impl(RunConfig c, Dataset d, std::string out, Deps dp)
        : cfg(std::move(c)), data(std::move(d)), out_dir(std::move(out)), deps(std::move(dp)) {}

    void warn(const std::string& msg) {
        warnings.push_back(msg);
        std::cerr << "[warn] " << msg << "\n";
    }

    std::size_t class_index(AssetClass c) const {
        for (std::size_t i = 0; i < 3; ++i) {
            if (kClassOrder[i] == c) return i;
        }
        return 0;
    }

    void setup();
    void log_transcript(Date date, const std::string& agent, const std::string& asset,
                        const std::string& tmpl, const std::string& prompt,
                        const std::string& response);
    void append_conference(const ConferenceLogEntry& entry);

    double valuation_close(const std::string& symbol, Date date) const;
    double portfolio_value(Date date) const;
    void check_invariants(Date date) const;
    std::string state_dump(Date date) const;

    Action decide_with_fallback(AgentState& agent, const DecisionContext& ctx);
    std::optional<Fill> execute(const Action& action, Date date, double price,
                                std::array<double, 3>& pools);
    void run_scheduled_conferences(Date date, std::size_t step_idx, const MarketSnapshot& snap);
    void do_reflections(Date date, std::size_t step_idx);
    void step(Date date, std::size_t step_idx);

    RunArtifacts finish();
    void write_artifacts(RunArtifacts& art);
};

void Engine::Impl::setup() {
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/logs");
    fs::create_directories(out_dir + "/memory");
    conf_log.open(out_dir + "/logs/conferences.jsonl");
    transcript_log.open(out_dir + "/logs/transcripts.jsonl");
    if (!conf_log || !transcript_log) throw Error("cannot open log files under " + out_dir);

    // Gateway only exists when an LLM backend or a cassette is in play.
    const bool llm_mode = cfg.policy_backend == "llm";
    if (llm_mode) {
        CassetteMode mode;
        if (cfg.cassette_mode == "record") mode = CassetteMode::Record;
        else if (cfg.cassette_mode == "replay") mode = CassetteMode::Replay;
        else if (cfg.cassette_mode == "passthrough") mode = CassetteMode::Passthrough;
        else if (cfg.cassette.empty()) mode = CassetteMode::Passthrough;
        else mode = fs::exists(cfg.cassette) ? CassetteMode::Replay : CassetteMode::Record;

        Gateway::Config gc;
        gc.chat_model = cfg.model;
        gc.embed_model = cfg.embed_model;
        gc.max_retries = cfg.llm_retries;
        gc.price_in_per_1k = cfg.price_in_per_1k;
        gc.price_out_per_1k = cfg.price_out_per_1k;
        std::unique_ptr<Transport> transport = std::move(deps.transport);
        if (!transport && mode != CassetteMode::Replay) transport = make_http_transport();
        gateway = std::make_unique<Gateway>(gc, std::move(transport), mode, cfg.cassette);
    }

    if (deps.embedder) embedder = std::move(deps.embedder);
    else if (gateway) {
        embedder = std::make_unique<GatewayEmbedder>(*gateway,
                                                     static_cast<std::size_t>(cfg.embed_dim));
    } else {
        embedder = std::make_unique<HashingEmbedder>(static_cast<std::size_t>(cfg.embed_dim));
    }

    const std::size_t dim = static_cast<std::size_t>(cfg.embed_dim);
    shared_ge = std::make_shared<MemoryStore>(MemoryKind::GeneralExperience, dim);
    for (const auto& profile : default_profiles(cfg.policy_backend)) {
        AgentState st;
        st.profile = profile;
        for (const auto& asset : data.assets()) {
            if (asset.asset_class == profile.asset_class) st.assets.push_back(asset);
        }
        st.mi = std::make_unique<MemoryStore>(MemoryKind::MarketInformation, dim);
        st.ir = std::make_unique<MemoryStore>(MemoryKind::InvestmentReflection, dim);
        st.ge = cfg.shared_ge ? shared_ge
                              : std::make_shared<MemoryStore>(MemoryKind::GeneralExperience, dim);
        if (deps.backend_factory) st.backend = deps.backend_factory(profile);
        else if (cfg.policy_backend == "llm") {
            st.backend = std::make_unique<LlmBackend>(*gateway, cfg.temperature);
        } else {
            st.backend = make_rule_backend(cfg.policy_backend);
        }
        agents.push_back(std::move(st));
    }
    bool any_assets = false;
    for (const auto& a : agents) any_assets = any_assets || !a.assets.empty();
    if (!any_assets) throw ConfigError("dataset has no assets in any analyst's class");

    cash = cfg.initial_capital;
    cycle_start_value = cash;

    for (Date d : data.union_calendar()) {
        if (d >= cfg.test_start && d <= cfg.end) run_dates.push_back(d);
    }
    if (run_dates.empty()) throw ConfigError("no trading dates in [test_start, end]");
    bac_dates = align_to_calendar(bac_anchors(cfg.test_start, cfg.end, cfg.bac_cycle_days),
                                  run_dates);
    for (const auto& asset : data.assets()) {
        weight_hist.symbols.push_back(asset.symbol);
        return_hist.symbols.push_back(asset.symbol);
    }
}

void Engine::Impl::log_transcript(Date date, const std::string& agent, const std::string& asset,
                                  const std::string& tmpl, const std::string& prompt,
                                  const std::string& response) {
    transcript_log << json{{"date", date.to_string()}, {"agent", agent},     {"asset", asset},
                           {"template", tmpl},         {"prompt", prompt},   {"response", response}}
                          .dump()
                   << "\n";
}

void Engine::Impl::append_conference(const ConferenceLogEntry& entry) {
    conf_log << conference_log_to_json(entry).dump() << "\n";
}

double Engine::Impl::valuation_close(const std::string& symbol, Date date) const {
    const auto close = data.close_on_or_before(symbol, date);
    if (!close) {
        throw EngineError("no valuation close for " + symbol + " at " + date.to_string());
    }
    return *close;
}

double Engine::Impl::portfolio_value(Date date) const {
    double v = cash;
    for (const auto& [sym, qty] : positions) {
        if (qty != 0) v += qty * valuation_close(sym, date);
    }
    return v;
}

std::string Engine::Impl::state_dump(Date date) const {
    json dump = {{"date", date.to_string()}, {"cash", cash}, {"positions", positions},
                 {"class_budget", class_budget}};
    return dump.dump();
}

void Engine::Impl::check_invariants(Date date) const {
    if (cash < -1e-6) {
        throw EngineError("negative cash at " + date.to_string() + ": " + state_dump(date));
    }
    for (const auto& [sym, qty] : positions) {
        if (qty < -1e-9) {
            throw EngineError("negative position in " + sym + " at " + date.to_string() + ": " +
                              state_dump(date));
        }
    }
    if (portfolio_value(date) <= 0) {
        throw EngineError("non-positive portfolio value at " + date.to_string() + ": " +
                          state_dump(date));
    }
}

Action Engine::Impl::decide_with_fallback(AgentState& agent, const DecisionContext& ctx) {
    try {
        return agent.backend->decide(agent.profile, ctx);
    } catch (const DeterminismError&) {
        throw; // replay divergence always aborts
    } catch (const GatewayError& e) {
        if (gateway && gateway->mode() == CassetteMode::Replay) throw;
        warn(std::string("backend failure, holding: ") + e.what());
        return make_action(ctx.asset, ActionKind::Hold, "fallback: backend failure");
    }
}

std::optional<Fill> Engine::Impl::execute(const Action& action, Date date, double price,
                                          std::array<double, 3>& pools) {
    if (action.kind == ActionKind::Hold) return std::nullopt;
    const double fee_rate = cfg.fee_bps / 10000.0;
    const std::size_t ci = class_index(action.asset.asset_class);
    double& position = positions[action.asset.symbol];

    if (is_buy(action.kind)) {
        double outlay = action.fraction * pools[ci];
        outlay = std::min(outlay, pools[ci]);
        outlay = std::min(outlay, cash);
        if (outlay <= 1e-12) {
            warn(date.to_string() + " " + action.asset.symbol + ": buy with no deployable cash");
            return std::nullopt;
        }
        const double notional = outlay / (1.0 + fee_rate);
        const double quantity = notional / price;
        const double fee = notional * fee_rate;
        cash -= outlay;
        pools[ci] -= outlay;
        position += quantity;
        cycle_book[ci].buys += outlay;
        return Fill{date, action.asset, Fill::Side::Buy, quantity, price, fee};
    }

    // sell side
    if (position <= 0) {
        warn(date.to_string() + " " + action.asset.symbol + ": sell with zero position");
        return std::nullopt;
    }
    const double quantity = action.fraction * position;
    const double notional = quantity * price;
    const double fee = notional * fee_rate;
    cash += notional - fee;
    position -= quantity;
    if (position < 1e-15) position = 0;
    cycle_book[ci].proceeds += notional - fee;
    return Fill{date, action.asset, Fill::Side::Sell, quantity, price, fee};
}

void Engine::Impl::run_scheduled_conferences(Date date, std::size_t step_idx,
                                             const MarketSnapshot& snap) {
    (void)snap;
    if (next_bac >= bac_dates.size() || bac_dates[next_bac] != date) return;
    ++next_bac;

    // Class return series over the trailing window (equal-weighted within a
    // class when it holds several assets).
    std::vector<ReturnSeries> class_series;
    bool estimable = true;
    for (std::size_t ci = 0; ci < 3; ++ci) {
        std::vector<ReturnSeries> members;
        for (const auto& agent : agents) {
            if (class_index(agent.profile.asset_class) != ci) continue;
            for (const auto& asset : agent.assets) {
                members.push_back(returns_from_bars(asset, data.bars_through(asset.symbol, date)));
            }
        }
        if (members.empty()) {
            estimable = false;
            break;
        }
        // merge equal-weighted on common dates
        ReturnSeries merged;
        merged.asset = AssetId{std::string("class_") + to_string(kClassOrder[ci]), kClassOrder[ci]};
        std::map<Date, std::pair<double, int>> acc;
        for (const auto& m : members) {
            for (std::size_t i = 0; i < m.dates.size(); ++i) {
                auto& slot = acc[m.dates[i]];
                slot.first += m.returns[i];
                slot.second += 1;
            }
        }
        const int want = static_cast<int>(members.size());
        for (const auto& [d, slot] : acc) {
            if (slot.second != want) continue;
            merged.dates.push_back(d);
            merged.returns.push_back(slot.first / want);
        }
        class_series.push_back(std::move(merged));
    }

    AllocatorInputs inputs;
    if (estimable) {
        try {
            inputs = estimate_inputs(class_series, cfg.allocator_window_days, cfg.bac_cycle_days);
        } catch (const InsufficientHistoryError& e) {
            estimable = false;
            warn(date.to_string() + " BAC skipped: " + e.what());
        }
    } else {
        warn(date.to_string() + " BAC skipped: a class has no assets");
    }

    if (estimable) {
        // Analyst reports: R_p is the class book's cycle P&L relative to the
        // portfolio value at cycle start.
        std::vector<AnalystReport> reports;
        const double denom = cycle_start_value > 0 ? cycle_start_value : cfg.initial_capital;
        for (std::size_t ci = 0; ci < 3; ++ci) {
            double mv = 0;
            for (const auto& agent : agents) {
                if (class_index(agent.profile.asset_class) != ci) continue;
                for (const auto& asset : agent.assets) {
                    const auto it = positions.find(asset.symbol);
                    if (it != positions.end() && it->second != 0) {
                        mv += it->second * valuation_close(asset.symbol, date);
                    }
                }
            }
            const auto& book = cycle_book[ci];
            const double pnl = mv - book.mv_start - book.buys + book.proceeds;
            AnalystReport rep;
            rep.agent = agents[ci].profile.name;
            rep.cycle_return = pnl / denom;
            rep.profit_summary = "cycle P&L " + fmt6(pnl) + " on the " +
                                 to_string(kClassOrder[ci]) + " book";
            rep.budget_request = "expects " + fmt6(inputs.rho[ci]) +
                                 " next cycle from trailing returns";
            reports.push_back(std::move(rep));
        }

        BacInputs bac;
        bac.date = date;
        bac.reports = std::move(reports);
        bac.manager = default_manager(cfg.policy_backend);
        bac.estimated = std::move(inputs);
        bac.lambda1 = cfg.lambda1;
        bac.lambda2 = cfg.policy_backend == "mv" ? 0.0 : cfg.lambda2;
        bac.alpha = cfg.alpha;
        bac.cycle_days = cfg.bac_cycle_days;
        bac.gateway = gateway.get();
        bac.temperature = cfg.temperature;

        BacResult result = run_bac(bac);
        if (result.warning) {
            warn(date.to_string() + " BAC: unparseable rho reply; rule estimate used");
        }
        for (std::size_t ci = 0; ci < 3; ++ci) class_budget[ci] = result.weights.omega[ci];
        append_conference(result.log);
        for (const auto& [prompt, response] : result.log.transcript) {
            log_transcript(date, bac.manager.name, "-", "budget", prompt, response);
        }
    }

    // Experience Sharing Conference closes the cycle that just ended (the
    // first BAC has no completed cycle to review).
    if (had_bac) {
        std::vector<EscParticipant> participants;
        for (const auto& agent : agents) {
            EscParticipant p;
            p.agent = agent.profile.name;
            // Reflections from the cycle just ended, ranked by |P&L|.
            std::vector<std::pair<double, const MemoryRecord*>> ranked;
            for (const auto& rec : agent.ir->records()) {
                if (rec.timestamp <= last_bac_date || rec.timestamp > date) continue;
                double pnl = 0;
                if (auto it = rec.metadata.find("return"); it != rec.metadata.end()) {
                    pnl = std::strtod(it->second.c_str(), nullptr);
                }
                ranked.emplace_back(std::abs(pnl), &rec);
            }
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            for (const auto& [absret, rec] : ranked) p.ranked_cases.push_back(rec->text);
            if (!ranked.empty()) p.case_date = ranked.front().second->timestamp;
            p.annotation = p.ranked_cases.empty()
                               ? agent.profile.name + ": no comparable case on record"
                               : agent.profile.name + ": comparable case: " +
                                     p.ranked_cases.front().substr(0, 96);
            participants.push_back(std::move(p));
        }
        EscResult esc = run_esc(date, participants, gateway.get(), cfg.temperature,
                                cfg.esc_rounds);
        for (std::size_t i = 0; i < esc.insights.size(); ++i) {
            MemoryRecord rec;
            rec.kind = MemoryKind::GeneralExperience;
            rec.timestamp = date;
            rec.text = esc.insights[i];
            rec.embedding = embedder->embed(esc.insights[i]);
            // presenter's store; in shared mode every agent sees it anyway
            for (auto& agent : agents) {
                if (agent.profile.name == esc.presenters[i]) {
                    agent.ge->insert(std::move(rec));
                    break;
                }
            }
        }
        append_conference(esc.log);
        for (const auto& [prompt, response] : esc.log.transcript) {
            log_transcript(date, "ESC", "-", "consolidate", prompt, response);
        }
    }

    // Open the next cycle's books.
    had_bac = true;
    last_bac_date = date;
    cycle_start_value = portfolio_value(date);
    for (std::size_t ci = 0; ci < 3; ++ci) {
        double mv = 0;
        for (const auto& agent : agents) {
            if (class_index(agent.profile.asset_class) != ci) continue;
            for (const auto& asset : agent.assets) {
                const auto it = positions.find(asset.symbol);
                if (it != positions.end() && it->second != 0) {
                    mv += it->second * valuation_close(asset.symbol, date);
                }
            }
        }
        cycle_book[ci] = ClassCycleBook{mv, 0, 0};
    }
    if (step_idx + 1 < run_dates.size()) cycle_starts.push_back(step_idx + 1);
}

void Engine::Impl::do_reflections(Date date, std::size_t step_idx) {
    for (auto& pending : pending_reflections) {
        if (pending.due_step != step_idx) continue;
        AgentState& agent = agents[pending.agent_idx];
        const double exit_close = valuation_close(pending.action.asset.symbol, date);
        const double realized = exit_close / pending.entry_close - 1.0;
        MemoryRecord rec = make_reflection(agent.profile, pending.action, realized,
                                           cfg.reflection_horizon_days, date, *embedder);
        agent.ir->insert(std::move(rec));
    }
    std::erase_if(pending_reflections,
                  [&](const PendingReflection& p) { return p.due_step <= step_idx; });
}

void Engine::Impl::step(Date date, std::size_t step_idx) {
    const MarketSnapshot snap = data.snapshot(date, default_indicator_set());
    for (auto& agent : agents) {
        agent.mi->set_clock(date);
        agent.ir->set_clock(date);
        agent.ge->set_clock(date);
    }

    // next_open mode: fill yesterday's queued orders at today's open.
    std::array<double, 3> pools{};
    for (std::size_t ci = 0; ci < 3; ++ci) pools[ci] = class_budget[ci] * cash;
    if (cfg.execution == "next_open" && !pending_orders.empty()) {
        std::vector<PendingOrder> keep;
        for (auto& order : pending_orders) {
            const auto bars = data.bars_through(order.action.asset.symbol, date);
            if (bars.empty() || bars.back().date != date) {
                keep.push_back(std::move(order)); // asset not trading yet
                continue;
            }
            if (auto fill = execute(order.action, date, bars.back().open, pools)) {
                fills.push_back(*fill);
            }
        }
        pending_orders = std::move(keep);
    }

    // Per-agent memory retrieval and decisions, fixed profile order.
    struct Decided {
        std::size_t agent_idx;
        Action action;
    };
    std::vector<Decided> decisions;
    for (std::size_t ai = 0; ai < agents.size(); ++ai) {
        AgentState& agent = agents[ai];
        for (const auto& asset : agent.assets) {
            const auto bar_it = snap.bars.find(asset.symbol);
            if (bar_it == snap.bars.end()) continue; // asset has no history yet

            // Summarized query Q_t by rule truncation.
            const Bar& bar = bar_it->second;
            std::string digest = date.to_string() + " " + asset.symbol + ": close " +
                                 fmt6(bar.close);
            const auto hist = data.bars_through(asset.symbol, date);
            if (hist.size() >= 2) {
                const double prev = hist[hist.size() - 2].close;
                digest += " (" + fmt6((bar.close / prev - 1.0) * 100.0) + "% d/d)";
            }
            if (auto it = snap.news.find(asset.symbol);
                it != snap.news.end() && !it->second.empty()) {
                digest += "; news: " + it->second.front().headline;
            } else {
                digest += "; no news";
            }
            if (auto it = snap.indicators.find(asset.symbol); it != snap.indicators.end()) {
                if (auto rsi = it->second.find("rsi_14"); rsi != it->second.end()) {
                    digest += "; rsi14 " + fmt6(rsi->second);
                }
            }
            if (digest.size() > 240) digest.resize(240);

            Query query;
            query.text = digest;
            query.embedding = embedder->embed(digest);
            query.k = 5;
            const MemoryStore* stores[] = {agent.mi.get(), agent.ir.get(), agent.ge.get()};
            const auto hits = cfg.retrieval_quota_mode ? retrieve_with_quota(stores, query, date)
                                                       : retrieve(stores, query, date);

            DecisionContext ctx;
            ctx.date = date;
            ctx.asset = asset;
            ctx.snapshot = &snap;
            ctx.history = hist;
            for (const auto& hit : hits) ctx.retrieved.push_back(*hit.record);
            ctx.position = positions.count(asset.symbol) ? positions[asset.symbol] : 0.0;
            ctx.budget_cash = pools[class_index(asset.asset_class)];

            const std::string prompt = render_decision_prompt(agent.profile, ctx);
            Action action = decide_with_fallback(agent, ctx);
            const std::string response =
                json{{"action", action_name(action.kind)}, {"rationale", action.rationale}}.dump();
            log_transcript(date, agent.profile.name, asset.symbol, "decision", prompt, response);

            // Store today's market information after retrieval so queries
            // never match their own digest.
            MemoryRecord mi_rec;
            mi_rec.kind = MemoryKind::MarketInformation;
            mi_rec.timestamp = date;
            mi_rec.text = digest;
            mi_rec.embedding = query.embedding;
            mi_rec.metadata = {{"asset", asset.symbol}};
            agent.mi->insert(std::move(mi_rec));

            decisions.push_back({ai, std::move(action)});
        }
    }

    // Extreme Market Conference: trigger scan and same-day re-decision.
    const auto triggers = detect_extreme(date, data, 0.05, 0.10,
                                         cfg.amplitude_mode == "close_close"
                                             ? AmplitudeMode::CloseToClose
                                             : AmplitudeMode::HighLow);
    std::vector<std::string> crisis_symbols;
    for (const auto& [asset, kind] : triggers) {
        if (std::find(crisis_symbols.begin(), crisis_symbols.end(), asset.symbol) ==
            crisis_symbols.end()) {
            crisis_symbols.push_back(asset.symbol);
        }
    }
    for (const auto& sym : crisis_symbols) {
        const AssetId* asset = data.find_asset(sym);
        std::size_t agent_idx = agents.size();
        for (std::size_t ai = 0; ai < agents.size(); ++ai) {
            if (agents[ai].profile.asset_class == asset->asset_class) {
                agent_idx = ai;
                break;
            }
        }
        if (agent_idx == agents.size()) continue;
        AgentState& agent = agents[agent_idx];

        CrisisBundle bundle;
        bundle.crisis_agent = agent.profile.name;
        bundle.lambda3 = cfg.lambda3;
        const double qty = positions.count(sym) ? positions[sym] : 0.0;
        const double value = portfolio_value(date);
        const double mv = qty * valuation_close(sym, date);
        bundle.holdings = fmt6(cash / value * 100.0) + "% cash, " + fmt6(mv / value * 100.0) +
                          "% " + sym + " (" + fmt6(qty) + " units)";
        std::string cause;
        const auto hist = data.bars_through(sym, date);
        for (const auto& [t_asset, t_kind] : triggers) {
            if (t_asset.symbol != sym) continue;
            if (t_kind == TriggerKind::Daily) {
                cause += std::string(cause.empty() ? "" : "; ") + "daily amplitude " +
                         fmt6(daily_amplitude(hist) * 100.0) + "% exceeds 5%";
            } else {
                cause += std::string(cause.empty() ? "" : "; ") + "three-day move " +
                         fmt6(cumulative_amplitude_3d(hist) * 100.0) + "% surpasses 10%";
            }
        }
        bundle.cause = cause;
        bundle.plan = "reassess " + sym + " exposure against the class budget and avoid "
                      "overtrading into volatility";
        bundle.manager_suggestion = "protect the book: scale the position toward the budget cap "
                                    "and prefer staged exits over bottom-fishing";
        for (const auto& peer : agents) {
            if (peer.profile.name == agent.profile.name) continue;
            bundle.peer_suggestions.push_back(peer.profile.name +
                                              ": diversification held elsewhere; avoid forced "
                                              "liquidation at the extreme print");
        }

        DecisionContext ctx;
        ctx.date = date;
        ctx.asset = *asset;
        ctx.snapshot = &snap;
        ctx.history = hist;
        ctx.position = qty;
        ctx.budget_cash = pools[class_index(asset->asset_class)];
        ctx.crisis_context = render_crisis_context(bundle);

        const std::string prompt = render_decision_prompt(agent.profile, ctx);
        Action revised = decide_with_fallback(agent, ctx);
        const std::string response =
            json{{"action", action_name(revised.kind)}, {"rationale", revised.rationale}}.dump();
        log_transcript(date, agent.profile.name, sym, "crisis", prompt, response);

        ConferenceLogEntry entry;
        entry.date = date;
        entry.kind = "EMC";
        entry.transcript.emplace_back(prompt, response);
        entry.outcome = {{"asset", sym},
                         {"action", action_name(revised.kind)},
                         {"lambda3", cfg.lambda3}};
        append_conference(entry);

        // Override the earlier decision for this asset.
        bool replaced = false;
        for (auto& d : decisions) {
            if (d.action.asset.symbol == sym) {
                d.action = revised;
                replaced = true;
                break;
            }
        }
        if (!replaced) decisions.push_back({agent_idx, std::move(revised)});
    }

    // Execute (same-day close) or queue (next open).
    for (auto& d : decisions) {
        if (cfg.execution == "next_open") {
            if (d.action.kind != ActionKind::Hold) {
                std::erase_if(pending_orders, [&](const PendingOrder& o) {
                    const bool replace = o.action.asset.symbol == d.action.asset.symbol;
                    if (replace) {
                        warn(date.to_string() + " " + o.action.asset.symbol +
                             ": unfilled order replaced by newer decision");
                    }
                    return replace;
                });
                pending_orders.push_back({d.agent_idx, d.action, date});
            }
        } else {
            const auto bars = data.bars_through(d.action.asset.symbol, date);
            if (bars.empty() || bars.back().date != date) {
                if (d.action.kind != ActionKind::Hold) {
                    warn(date.to_string() + " " + d.action.asset.symbol +
                         ": no bar today, trade skipped");
                }
                continue;
            }
            if (auto fill = execute(d.action, date, bars.back().close, pools)) {
                fills.push_back(*fill);
            }
        }
        // Every decision gets a reflection when its horizon elapses.
        const std::size_t due = step_idx + static_cast<std::size_t>(cfg.reflection_horizon_days);
        if (due < run_dates.size()) {
            pending_reflections.push_back({d.agent_idx, d.action, date, due,
                                           valuation_close(d.action.asset.symbol, date)});
        }
    }

    // Mark to market.
    const double value = portfolio_value(date);
    check_invariants(date);
    dates_out.push_back(date);
    equity.push_back(value);
    {
        std::vector<double> w_row;
        std::vector<double> r_row;
        for (const auto& asset : data.assets()) {
            const double qty = positions.count(asset.symbol) ? positions[asset.symbol] : 0.0;
            const double close = valuation_close(asset.symbol, date);
            w_row.push_back(qty * close / value);
            if (step_idx == 0) {
                r_row.push_back(0.0);
            } else {
                const double prev = valuation_close(asset.symbol, run_dates[step_idx - 1]);
                r_row.push_back(close / prev - 1.0);
            }
        }
        weight_hist.dates.push_back(date);
        weight_hist.weights.push_back(std::move(w_row));
        return_hist.dates.push_back(date);
        return_hist.returns.push_back(std::move(r_row));
    }

    // Scheduled conferences, then reflections that fall due today.
    run_scheduled_conferences(date, step_idx, snap);
    do_reflections(date, step_idx);
}

RunArtifacts Engine::Impl::finish() {
    RunArtifacts art;
    art.dates = dates_out;
    art.equity = equity;
    art.fills = fills;
    art.weights = weight_hist;
    art.returns = return_hist;
    art.rewards.gamma = cfg.gamma;
    for (std::size_t i = 1; i < equity.size(); ++i) {
        art.rewards.rewards.push_back(equity[i] / equity[i - 1] - 1.0);
    }
    art.metrics = compute_metrics(art.dates, art.equity, art.weights, art.returns, cycle_starts,
                                  cfg.risk_free_rate);
    if (gateway) {
        art.usage = gateway->usage();
        art.cost = gateway->cost();
        art.network_calls = gateway->network_calls();
        gateway->flush();
    }
    art.warnings = warnings;
    art.out_dir = out_dir;
    write_artifacts(art);
    return art;
}

void Engine::Impl::write_artifacts(RunArtifacts& art) {
    for (auto& agent : agents) {
        const std::string stem = out_dir + "/memory/";
        std::string lname = agent.profile.name;
        std::transform(lname.begin(), lname.end(), lname.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        agent.mi->save_jsonl(stem + lname + "_mi.jsonl");
        agent.ir->save_jsonl(stem + lname + "_ir.jsonl");
        if (!cfg.shared_ge) agent.ge->save_jsonl(stem + lname + "_ge.jsonl");
    }
    if (cfg.shared_ge) shared_ge->save_jsonl(out_dir + "/memory/shared_ge.jsonl");

    {
        std::ofstream out(out_dir + "/equity.csv");
        out << "date,total_value\n";
        for (std::size_t i = 0; i < art.dates.size(); ++i) {
            out << art.dates[i].to_string() << "," << fmt17(art.equity[i]) << "\n";
        }
    }
    {
        std::ofstream out(out_dir + "/fills.csv");
        out << "date,asset,side,quantity,price,cost\n";
        for (const auto& f : art.fills) {
            out << f.date.to_string() << "," << f.asset.symbol << ","
                << (f.side == Fill::Side::Buy ? "buy" : "sell") << "," << fmt17(f.quantity) << ","
                << fmt17(f.price) << "," << fmt17(f.cost) << "\n";
        }
    }
    {
        std::ofstream out(out_dir + "/weights.csv");
        out << "date";
        for (const auto& asset : data.assets()) out << "," << asset.symbol;
        out << "\n";
        for (std::size_t i = 0; i < art.weights.dates.size(); ++i) {
            out << art.weights.dates[i].to_string();
            for (double w : art.weights.weights[i]) out << "," << fmt17(w);
            out << "\n";
        }
    }
    {
        std::ofstream out(out_dir + "/metrics.json");
        out << metrics_to_json(art.metrics).dump(2) << "\n";
    }
    {
        json run = {
            {"config", cfg.to_json()},
            {"tokens", {{"in", art.usage.in}, {"out", art.usage.out}}},
            {"cost", art.cost},
            {"network_calls", art.network_calls},
            {"discounted_reward", art.rewards.discounted_sum()},
            {"gamma", cfg.gamma},
            {"warnings", static_cast<int>(art.warnings.size())},
            {"fills", static_cast<int>(art.fills.size())},
        };
        std::ofstream out(out_dir + "/run.json");
        out << run.dump(2) << "\n";
    }
}

Engine::Engine(RunConfig cfg, Dataset data, std::string out_dir, Deps deps)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(data), std::move(out_dir),
                                   std::move(deps))) {
    impl_->setup();
}

Engine::~Engine() = default;

RunArtifacts Engine::run() {
    for (std::size_t i = 0; i < impl_->run_dates.size(); ++i) {
        impl_->step(impl_->run_dates[i], i);
    }
    return impl_->finish();
}

RunArtifacts run_backtest(const RunConfig& cfg, const std::string& out_dir, Engine::Deps deps) {
    Dataset data = Dataset::load(cfg.data_dir);
    Engine engine(cfg, std::move(data), out_dir, std::move(deps));
    return engine.run();
}

} // namespace hedgeflow
