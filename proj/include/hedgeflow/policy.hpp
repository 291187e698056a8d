#pragma once

#include "hedgeflow/asset.hpp"
#include "hedgeflow/embedder.hpp"
#include "hedgeflow/gateway.hpp"
#include "hedgeflow/market_data.hpp"
#include "hedgeflow/memory.hpp"

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hedgeflow {

enum class ActionKind {
    BuyQuarter,
    BuyHalf,
    BuyAll,
    SellQuarter,
    SellHalf,
    SellAll,
    Hold,
    CloseAll,
};

/// Sizing implied by the kind: 0.25 / 0.5 / 1.0, 0 for Hold.
double action_fraction(ActionKind kind);
const char* action_name(ActionKind kind); // upper-snake wire name
std::optional<ActionKind> action_from_name(const std::string& name);
bool is_buy(ActionKind kind);
bool is_sell(ActionKind kind);

struct Action {
    AssetId asset;
    ActionKind kind = ActionKind::Hold;
    double fraction = 0.0;
    std::string rationale;
};

Action make_action(const AssetId& asset, ActionKind kind, std::string rationale);

enum class TemplateName { Decision, Budget, Consolidate, Crisis };

/// Skeleton text with `{lower_snake}` placeholders. Literal braces that do
/// not form a placeholder (e.g. JSON examples) pass through untouched.
struct PromptTemplate {
    TemplateName name = TemplateName::Decision;
    std::string skeleton;
};

const PromptTemplate& builtin_template(TemplateName name);

/// Deterministic placeholder substitution; an unresolved placeholder throws
/// TemplateError naming it.
std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values);

struct AgentProfile {
    std::string name;
    std::string role;
    AssetClass asset_class = AssetClass::Crypto;
    std::string backend; // "buy_and_hold" | "tsm" | "zmr" | "mv" | "llm" | ...
};

/// The three analysts plus the manager, in fixed order.
std::vector<AgentProfile> default_profiles(const std::string& backend);
AgentProfile default_manager(const std::string& backend);

/// Everything a decision sees for one asset on one day. All content is
/// gated at `date` by construction.
struct DecisionContext {
    Date date;
    AssetId asset;
    const MarketSnapshot* snapshot = nullptr;
    std::span<const Bar> history; // bars dated <= date
    std::vector<MemoryRecord> retrieved;
    double position = 0.0;
    double budget_cash = 0.0;
    std::string crisis_context; // non-empty only for an EMC re-decision
};

/// Fills the decision (or crisis) template from a context.
std::string render_decision_prompt(const AgentProfile& profile, const DecisionContext& ctx);

struct ParsedDecision {
    Action action;
    bool fallback = false; // response was unusable; Hold substituted
};

/// Total parser: extracts the first syntactically valid JSON object with
/// `action` and `rationale`; anything else maps to Hold with the fallback
/// flag raised. Never throws.
ParsedDecision parse_decision(const std::string& response, const AssetId& asset);

/// Scans text for the first parseable JSON object (tolerates prose around
/// and after it). Returns nullopt when none exists.
std::optional<nlohmann::json> extract_first_json_object(const std::string& text);

class DecisionBackend {
public:
    virtual ~DecisionBackend() = default;
    virtual Action decide(const AgentProfile& profile, const DecisionContext& ctx) = 0;
    virtual std::string name() const = 0;
};

/// "buy_and_hold", "tsm", "zmr" or "mv"; throws ConfigError otherwise.
std::unique_ptr<DecisionBackend> make_rule_backend(const std::string& name);
bool is_rule_backend(const std::string& name);

/// Renders the decision prompt, asks the gateway, parses the reply.
class LlmBackend final : public DecisionBackend {
public:
    LlmBackend(Gateway& gateway, double temperature);
    Action decide(const AgentProfile& profile, const DecisionContext& ctx) override;
    std::string name() const override { return "llm"; }

private:
    Gateway& gateway_;
    double temperature_;
};

/// Post-hoc reflection on an action's realized outcome; the caller inserts
/// the record into M_IR.
MemoryRecord make_reflection(const AgentProfile& profile, const Action& action,
                             double realized_return, int horizon_days, Date when,
                             Embedder& embedder);

} // namespace hedgeflow
