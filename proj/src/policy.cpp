#include "hedgeflow/policy.hpp"

#include "hedgeflow/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace hedgeflow {

using nlohmann::json;

double action_fraction(ActionKind kind) {
    switch (kind) {
        case ActionKind::BuyQuarter:
        case ActionKind::SellQuarter: return 0.25;
        case ActionKind::BuyHalf:
        case ActionKind::SellHalf: return 0.5;
        case ActionKind::BuyAll:
        case ActionKind::SellAll:
        case ActionKind::CloseAll: return 1.0;
        case ActionKind::Hold: return 0.0;
    }
    return 0.0;
}

const char* action_name(ActionKind kind) {
    switch (kind) {
        case ActionKind::BuyQuarter: return "BUY_QUARTER";
        case ActionKind::BuyHalf: return "BUY_HALF";
        case ActionKind::BuyAll: return "BUY_ALL";
        case ActionKind::SellQuarter: return "SELL_QUARTER";
        case ActionKind::SellHalf: return "SELL_HALF";
        case ActionKind::SellAll: return "SELL_ALL";
        case ActionKind::Hold: return "HOLD";
        case ActionKind::CloseAll: return "CLOSE_ALL";
    }
    return "HOLD";
}

std::optional<ActionKind> action_from_name(const std::string& name) {
    std::string up = name;
    std::transform(up.begin(), up.end(), up.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    static const std::pair<const char*, ActionKind> table[] = {
        {"BUY_QUARTER", ActionKind::BuyQuarter}, {"BUY_HALF", ActionKind::BuyHalf},
        {"BUY_ALL", ActionKind::BuyAll},         {"SELL_QUARTER", ActionKind::SellQuarter},
        {"SELL_HALF", ActionKind::SellHalf},     {"SELL_ALL", ActionKind::SellAll},
        {"HOLD", ActionKind::Hold},              {"CLOSE_ALL", ActionKind::CloseAll},
    };
    for (const auto& [n, k] : table) {
        if (up == n) return k;
    }
    return std::nullopt;
}

bool is_buy(ActionKind kind) {
    return kind == ActionKind::BuyQuarter || kind == ActionKind::BuyHalf ||
           kind == ActionKind::BuyAll;
}

bool is_sell(ActionKind kind) {
    return kind == ActionKind::SellQuarter || kind == ActionKind::SellHalf ||
           kind == ActionKind::SellAll || kind == ActionKind::CloseAll;
}

Action make_action(const AssetId& asset, ActionKind kind, std::string rationale) {
    return Action{asset, kind, action_fraction(kind), std::move(rationale)};
}

// ---------------------------------------------------------------------------
// Prompt templates

namespace {

#define HEDGEFLOW_ACTION_MENU \
    "Valid actions: BUY_QUARTER, BUY_HALF, BUY_ALL, SELL_QUARTER, SELL_HALF, SELL_ALL, HOLD, " \
    "CLOSE_ALL.\n"

const PromptTemplate kDecision{
    TemplateName::Decision,
    "You are {agent_name}, {agent_role}.\n"
    "Date: {date}. Asset under management: {asset} ({asset_class}).\n"
    "Market environment today:\n"
    "{prices}\n"
    "News:\n"
    "{news}\n"
    "Tool results:\n"
    "{tool_results}\n"
    "Current position: {position} units. Deployable budget: {budget}.\n"
    "Relevant past cases (top {k}):\n"
    "{memories}\n"
    "Decide one action for {asset}. Respond with a single JSON object, e.g.\n"
    "{\"action\": \"BUY_HALF\", \"rationale\": \"why\"}\n" HEDGEFLOW_ACTION_MENU};

const PromptTemplate kCrisis{
    TemplateName::Crisis,
    "Extreme Market Conference re-decision.\n"
    "You are {agent_name}, {agent_role}.\n"
    "Date: {date}. Asset in crisis: {asset} ({asset_class}).\n"
    "{crisis}\n"
    "Market environment today:\n"
    "{prices}\n"
    "Tool results:\n"
    "{tool_results}\n"
    "Current position: {position} units. Deployable budget: {budget}.\n"
    "Decide a revised action for {asset}. Respond with a single JSON object, e.g.\n"
    "{\"action\": \"SELL_HALF\", \"rationale\": \"why\"}\n" HEDGEFLOW_ACTION_MENU};

const PromptTemplate kBudget{
    TemplateName::Budget,
    "You are {manager_name}, {manager_role}.\n"
    "Budget Allocation Conference on {date}.\n"
    "Analyst reports:\n"
    "{reports}\n"
    "Auxiliary tool digest:\n"
    "{tools}\n"
    "Estimate each desk's expected return over the next {cycle_days}-day cycle.\n"
    "Respond with a single JSON object mapping analyst to expected return fraction, e.g.\n"
    "{\"dave\": 0.05, \"bob\": 0.02, \"emily\": 0.01}\n"};

const PromptTemplate kConsolidate{
    TemplateName::Consolidate,
    "Experience Sharing Conference on {date}.\n"
    "Case presented by {agent}:\n"
    "{case}\n"
    "Peer annotations:\n"
    "{annotations}\n"
    "Consolidate the discussion into one durable investment lesson (plain text).\n"};

bool placeholder_at(const std::string& s, std::size_t open, std::string& name,
                    std::size_t& close) {
    // {lower_snake} only; anything else (JSON braces etc.) is literal text.
    std::size_t i = open + 1;
    if (i >= s.size()) return false;
    if (!(std::islower(static_cast<unsigned char>(s[i])) || s[i] == '_')) return false;
    std::size_t j = i;
    while (j < s.size() &&
           (std::islower(static_cast<unsigned char>(s[j])) ||
            std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '_')) {
        ++j;
    }
    if (j >= s.size() || s[j] != '}') return false;
    name = s.substr(i, j - i);
    close = j;
    return true;
}

} // namespace

const PromptTemplate& builtin_template(TemplateName name) {
    switch (name) {
        case TemplateName::Decision: return kDecision;
        case TemplateName::Budget: return kBudget;
        case TemplateName::Consolidate: return kConsolidate;
        case TemplateName::Crisis: return kCrisis;
    }
    return kDecision;
}

std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.skeleton.size());
    const std::string& s = tmpl.skeleton;
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == '{') {
            std::string name;
            std::size_t close = 0;
            if (placeholder_at(s, i, name, close)) {
                auto it = values.find(name);
                if (it == values.end()) {
                    throw TemplateError("unresolved placeholder '" + name + "'");
                }
                out += it->second;
                i = close + 1;
                continue;
            }
        }
        out.push_back(s[i]);
        ++i;
    }
    return out;
}

std::vector<AgentProfile> default_profiles(const std::string& backend) {
    return {
        {"Dave", "cryptocurrency analyst managing the Bitcoin book", AssetClass::Crypto, backend},
        {"Bob", "equity analyst managing the Dow Jones book", AssetClass::Equity, backend},
        {"Emily", "foreign-exchange analyst managing the currency book", AssetClass::Forex,
         backend},
    };
}

AgentProfile default_manager(const std::string& backend) {
    return {"Otto", "hedge fund manager responsible for portfolio risk and budget allocation",
            AssetClass::Equity, backend};
}

// ---------------------------------------------------------------------------
// Prompt assembly

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string price_lines(const MarketSnapshot& snap) {
    std::string out;
    for (const auto& [sym, bar] : snap.bars) {
        out += "- " + sym + " open=" + fmt(bar.open) + " high=" + fmt(bar.high) +
               " low=" + fmt(bar.low) + " close=" + fmt(bar.close) +
               " volume=" + fmt(bar.volume) + " (bar date " + bar.date.to_string() + ")\n";
    }
    if (out.empty()) out = "(no bars)\n";
    return out;
}

std::string news_lines(const MarketSnapshot& snap, const std::string& symbol) {
    auto it = snap.news.find(symbol);
    if (it == snap.news.end() || it->second.empty()) return "(no news today)\n";
    std::string out;
    for (const auto& item : it->second) {
        out += "- [" + item.date.to_string() + "] " + item.headline + "\n";
    }
    return out;
}

std::string tool_lines(const MarketSnapshot& snap, const std::string& symbol) {
    auto it = snap.indicators.find(symbol);
    if (it == snap.indicators.end() || it->second.empty()) return "(insufficient history)\n";
    std::string out;
    for (const auto& [name, value] : it->second) {
        out += "- " + name + " = " + fmt(value) + "\n";
    }
    return out;
}

std::string memory_lines(const std::vector<MemoryRecord>& retrieved) {
    if (retrieved.empty()) return "(none)\n";
    std::string out;
    for (const auto& rec : retrieved) {
        out += "- [" + rec.timestamp.to_string() + "][" + to_string(rec.kind) + "] " + rec.text +
               "\n";
    }
    return out;
}

} // namespace

std::string render_decision_prompt(const AgentProfile& profile, const DecisionContext& ctx) {
    if (!ctx.snapshot) throw TemplateError("decision context has no snapshot");
    std::map<std::string, std::string> values = {
        {"agent_name", profile.name},
        {"agent_role", profile.role},
        {"date", ctx.date.to_string()},
        {"asset", ctx.asset.symbol},
        {"asset_class", to_string(ctx.asset.asset_class)},
        {"prices", price_lines(*ctx.snapshot)},
        {"news", news_lines(*ctx.snapshot, ctx.asset.symbol)},
        {"tool_results", tool_lines(*ctx.snapshot, ctx.asset.symbol)},
        {"position", fmt(ctx.position)},
        {"budget", fmt(ctx.budget_cash)},
        {"k", std::to_string(ctx.retrieved.size())},
        {"memories", memory_lines(ctx.retrieved)},
    };
    if (!ctx.crisis_context.empty()) {
        values["crisis"] = ctx.crisis_context;
        return render(builtin_template(TemplateName::Crisis), values);
    }
    return render(builtin_template(TemplateName::Decision), values);
}

// ---------------------------------------------------------------------------
// Parsing

std::optional<json> extract_first_json_object(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                --depth;
                if (depth == 0) {
                    const std::string candidate = text.substr(start, i - start + 1);
                    json parsed = json::parse(candidate, nullptr, false);
                    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                    break; // try the next '{'
                }
            }
        }
    }
    return std::nullopt;
}

ParsedDecision parse_decision(const std::string& response, const AssetId& asset) {
    const auto fallback = [&] {
        ParsedDecision p{make_action(asset, ActionKind::Hold, "fallback: unparseable response"),
                         true};
        return p;
    };
    auto obj = extract_first_json_object(response);
    if (!obj) return fallback();
    if (!obj->contains("action") || !(*obj)["action"].is_string()) return fallback();
    const auto kind = action_from_name((*obj)["action"].get<std::string>());
    if (!kind) return fallback();
    std::string rationale;
    if (obj->contains("rationale") && (*obj)["rationale"].is_string()) {
        rationale = (*obj)["rationale"].get<std::string>();
    }
    return {make_action(asset, *kind, std::move(rationale)), false};
}

// ---------------------------------------------------------------------------
// Rule backends

namespace {

class BuyAndHoldBackend final : public DecisionBackend {
public:
    Action decide(const AgentProfile&, const DecisionContext& ctx) override {
        if (ctx.position <= 0) {
            return make_action(ctx.asset, ActionKind::BuyAll, "buy_and_hold: initial entry");
        }
        return make_action(ctx.asset, ActionKind::Hold, "buy_and_hold: holding");
    }
    std::string name() const override { return "buy_and_hold"; }
};

// Time-series momentum: sign of the trailing 252-day return.
class TsmBackend final : public DecisionBackend {
public:
    Action decide(const AgentProfile&, const DecisionContext& ctx) override {
        constexpr std::size_t lookback = 252;
        if (ctx.history.size() < lookback + 1) {
            return make_action(ctx.asset, ActionKind::Hold, "tsm: insufficient history");
        }
        const double now = ctx.history.back().close;
        const double then = ctx.history[ctx.history.size() - 1 - lookback].close;
        const double trailing = now / then - 1.0;
        if (trailing > 0) {
            return make_action(ctx.asset, ActionKind::BuyAll,
                               "tsm: trailing 252d return " + fmt(trailing) + " > 0");
        }
        if (trailing < 0) {
            return make_action(ctx.asset, ActionKind::SellAll,
                               "tsm: trailing 252d return " + fmt(trailing) + " < 0");
        }
        return make_action(ctx.asset, ActionKind::Hold, "tsm: flat trailing return");
    }
    std::string name() const override { return "tsm"; }
};

// Z-score mean reversion against the 20-day mean.
class ZmrBackend final : public DecisionBackend {
public:
    Action decide(const AgentProfile&, const DecisionContext& ctx) override {
        constexpr std::size_t window = 20;
        if (ctx.history.size() < window) {
            return make_action(ctx.asset, ActionKind::Hold, "zmr: insufficient history");
        }
        double mean = 0;
        for (std::size_t i = ctx.history.size() - window; i < ctx.history.size(); ++i) {
            mean += ctx.history[i].close;
        }
        mean /= static_cast<double>(window);
        double var = 0;
        for (std::size_t i = ctx.history.size() - window; i < ctx.history.size(); ++i) {
            const double d = ctx.history[i].close - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(window - 1));
        if (sd < 1e-12) return make_action(ctx.asset, ActionKind::Hold, "zmr: flat window");
        const double z = (ctx.history.back().close - mean) / sd;
        if (z > 1.0) {
            return make_action(ctx.asset, ActionKind::SellHalf, "zmr: z=" + fmt(z) + " > 1");
        }
        if (z < -1.0) {
            return make_action(ctx.asset, ActionKind::BuyHalf, "zmr: z=" + fmt(z) + " < -1");
        }
        return make_action(ctx.asset, ActionKind::Hold, "zmr: |z|=" + fmt(std::abs(z)) + " <= 1");
    }
    std::string name() const override { return "zmr"; }
};

// Mean-variance desk policy: stay fully deployed inside the class budget;
// the run config pins lambda2 = 0 so the BAC solve is pure mean-variance.
class MvBackend final : public DecisionBackend {
public:
    Action decide(const AgentProfile&, const DecisionContext& ctx) override {
        if (ctx.budget_cash > 1e-9) {
            return make_action(ctx.asset, ActionKind::BuyAll, "mv: deploying budgeted cash");
        }
        return make_action(ctx.asset, ActionKind::Hold, "mv: budget exhausted");
    }
    std::string name() const override { return "mv"; }
};

} // namespace

bool is_rule_backend(const std::string& name) {
    return name == "buy_and_hold" || name == "tsm" || name == "zmr" || name == "mv";
}

std::unique_ptr<DecisionBackend> make_rule_backend(const std::string& name) {
    if (name == "buy_and_hold") return std::make_unique<BuyAndHoldBackend>();
    if (name == "tsm") return std::make_unique<TsmBackend>();
    if (name == "zmr") return std::make_unique<ZmrBackend>();
    if (name == "mv") return std::make_unique<MvBackend>();
    throw ConfigError("unknown rule backend '" + name + "'");
}

LlmBackend::LlmBackend(Gateway& gateway, double temperature)
    : gateway_(gateway), temperature_(temperature) {}

Action LlmBackend::decide(const AgentProfile& profile, const DecisionContext& ctx) {
    ChatRequest req;
    req.temperature = temperature_;
    req.messages.push_back({"user", render_decision_prompt(profile, ctx)});
    const std::string response = gateway_.chat(req);
    return parse_decision(response, ctx.asset).action;
}

// ---------------------------------------------------------------------------
// Reflection

MemoryRecord make_reflection(const AgentProfile& profile, const Action& action,
                             double realized_return, int horizon_days, Date when,
                             Embedder& embedder) {
    char pct[32];
    std::snprintf(pct, sizeof(pct), "%+.2f%%", realized_return * 100.0);
    std::string text = when.to_string() + " reflection by " + profile.name + ": action " +
                       action_name(action.kind) + " on " + action.asset.symbol + " returned " +
                       pct + " over " + std::to_string(horizon_days) + " trading days.";
    if (!action.rationale.empty()) text += " Context: " + action.rationale;

    MemoryRecord rec;
    rec.kind = MemoryKind::InvestmentReflection;
    rec.timestamp = when;
    rec.text = text;
    rec.embedding = embedder.embed(text);
    rec.metadata = {
        {"asset", action.asset.symbol},
        {"action", action_name(action.kind)},
        {"return", fmt(realized_return)},
        {"horizon_days", std::to_string(horizon_days)},
    };
    return rec;
}

} // namespace hedgeflow
