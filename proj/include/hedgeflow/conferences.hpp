#pragma once

#include "hedgeflow/allocator.hpp"
#include "hedgeflow/gateway.hpp"
#include "hedgeflow/market_data.hpp"
#include "hedgeflow/policy.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hedgeflow {

/// One analyst's submission to the Budget Allocation Conference.
struct AnalystReport {
    std::string agent;
    double cycle_return = 0.0;  // R_p, consistent with the engine's books
    std::string profit_summary; // text around R_p
    std::string budget_request; // R_b: expectation and reasons
};

struct ExpectedReturnVector {
    enum class Provenance { LlmParsed, RuleEstimated };
    std::vector<double> rho; // fixed agent order
    Provenance provenance = Provenance::RuleEstimated;
};

/// Audit record of one conference; persisted as JSONL per run.
struct ConferenceLogEntry {
    Date date;
    std::string kind; // "BAC" | "ESC" | "EMC"
    std::vector<std::pair<std::string, std::string>> transcript; // prompt/response pairs
    nlohmann::json outcome;
};

nlohmann::json conference_log_to_json(const ConferenceLogEntry& entry);

/// The 30-day-grid anchor dates: start, start+cycle, start+2*cycle, ...
std::vector<Date> bac_anchors(Date start, Date end, int cycle_days);

/// Maps each anchor to the first trading day on or after it (deduplicated).
std::vector<Date> align_to_calendar(const std::vector<Date>& anchors,
                                    const std::vector<Date>& calendar);

/// Parses the manager's rho reply: first JSON object with one finite number
/// per agent key (lowercased names, fixed order). nullopt on any miss.
std::optional<std::vector<double>> parse_rho_response(const std::string& response,
                                                      const std::vector<std::string>& agent_keys);

struct BacInputs {
    Date date;
    std::vector<AnalystReport> reports; // fixed agent order
    AgentProfile manager;
    AllocatorInputs estimated; // rule-mode rho plus cov/history for Eq. 5
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double alpha = 0.95;
    int cycle_days = 30;
    Gateway* gateway = nullptr; // null: rule mode
    double temperature = 0.7;
};

struct BacResult {
    Weights weights;
    ExpectedReturnVector rho;
    ConferenceLogEntry log;
    bool warning = false; // backend reply was unusable; rule fallback used
};

/// Budget Allocation Conference: obtain rho (backend or rule fallback),
/// solve the simplex objective, return the class budget weights.
BacResult run_bac(const BacInputs& in);

/// One agent's contribution to the Experience Sharing Conference.
struct EscParticipant {
    std::string agent;
    // Reflection cases ranked by |realized P&L|, best first. Empty list
    // means the agent abstains.
    std::vector<std::string> ranked_cases;
    Date case_date;
    // The annotation this agent offers when a peer presents.
    std::string annotation;
};

struct EscResult {
    std::vector<std::string> insights;   // new M_GE texts, presenter order x rounds
    std::vector<std::string> presenters; // agent name per insight
    ConferenceLogEntry log;
};

/// Rule-mode consolidation: case text plus deduplicated peer annotations.
std::string consolidate_rule_mode(const std::string& agent, Date date, const std::string& case_text,
                                  const std::vector<std::string>& peer_notes);

EscResult run_esc(Date date, const std::vector<EscParticipant>& participants, Gateway* gateway,
                  double temperature, int rounds = 1);

enum class TriggerKind { Daily, ThreeDay };
const char* to_string(TriggerKind k);

/// Fires per asset when the daily amplitude exceeds `daily_threshold` or the
/// cumulative three-day amplitude surpasses `three_day_threshold` (both
/// strict). Assets without a bar on `date` cannot fire.
std::vector<std::pair<AssetId, TriggerKind>> detect_extreme(
    Date date, const Dataset& data, double daily_threshold = 0.05,
    double three_day_threshold = 0.10, AmplitudeMode mode = AmplitudeMode::HighLow);

/// Crisis context for the EMC re-decision prompt. lambda3 balances the
/// manager + crisis-agent sections (S_B, S_C) against the peer suggestions
/// (S_E): 0 keeps only the former, 1 keeps only the peers, anything between
/// includes both with explicit weight annotations.
struct CrisisBundle {
    std::string crisis_agent;
    std::string holdings; // portfolio snapshot text
    std::string cause;    // S_C
    std::string plan;
    std::string manager_suggestion;         // S_B
    std::vector<std::string> peer_suggestions; // S_E
    double lambda3 = 0.5;
};

std::string render_crisis_context(const CrisisBundle& bundle);

} // namespace hedgeflow
