#include "hedgeflow/conferences.hpp"

#include "hedgeflow/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

namespace hedgeflow {

using nlohmann::json;

nlohmann::json conference_log_to_json(const ConferenceLogEntry& entry) {
    json transcript = json::array();
    for (const auto& [prompt, response] : entry.transcript) {
        transcript.push_back({{"prompt", prompt}, {"response", response}});
    }
    return json{{"date", entry.date.to_string()},
                {"kind", entry.kind},
                {"transcript", transcript},
                {"outcome", entry.outcome}};
}

std::vector<Date> bac_anchors(Date start, Date end, int cycle_days) {
    if (cycle_days <= 0) throw ConfigError("BAC cycle must be positive");
    std::vector<Date> anchors;
    for (Date d = start; d <= end; d = d.plus_days(cycle_days)) anchors.push_back(d);
    return anchors;
}

std::vector<Date> align_to_calendar(const std::vector<Date>& anchors,
                                    const std::vector<Date>& calendar) {
    std::vector<Date> aligned;
    for (Date a : anchors) {
        auto it = std::lower_bound(calendar.begin(), calendar.end(), a);
        if (it == calendar.end()) continue;
        if (aligned.empty() || aligned.back() != *it) aligned.push_back(*it);
    }
    return aligned;
}

std::optional<std::vector<double>> parse_rho_response(const std::string& response,
                                                      const std::vector<std::string>& agent_keys) {
    auto obj = extract_first_json_object(response);
    if (!obj) return std::nullopt;
    std::vector<double> rho;
    rho.reserve(agent_keys.size());
    for (const auto& key : agent_keys) {
        if (!obj->contains(key) || !(*obj)[key].is_number()) return std::nullopt;
        const double v = (*obj)[key].get<double>();
        if (!std::isfinite(v)) return std::nullopt;
        rho.push_back(v);
    }
    return rho;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

} // namespace

BacResult run_bac(const BacInputs& in) {
    if (in.reports.empty()) throw ValidationError("BAC needs analyst reports");

    BacResult out;
    out.log.date = in.date;
    out.log.kind = "BAC";

    std::string reports_text;
    std::vector<std::string> agent_keys;
    for (const auto& r : in.reports) {
        agent_keys.push_back(lowercase(r.agent));
        reports_text += "- " + r.agent + ": R_p " + fmt(r.cycle_return) + " (" +
                        r.profit_summary + "); R_b " + r.budget_request + "\n";
    }
    std::string tools_text = "trailing mean daily returns scaled to the cycle:";
    for (std::size_t i = 0; i < in.estimated.rho.size(); ++i) {
        tools_text += " " + agent_keys[i] + "=" + fmt(in.estimated.rho[i]);
    }

    const std::string prompt = render(builtin_template(TemplateName::Budget),
                                      {{"manager_name", in.manager.name},
                                       {"manager_role", in.manager.role},
                                       {"date", in.date.to_string()},
                                       {"reports", reports_text},
                                       {"tools", tools_text},
                                       {"cycle_days", std::to_string(in.cycle_days)}});

    out.rho.rho = in.estimated.rho;
    out.rho.provenance = ExpectedReturnVector::Provenance::RuleEstimated;
    std::string response;
    if (in.gateway) {
        ChatRequest req;
        req.temperature = in.temperature;
        req.messages.push_back({"user", prompt});
        response = in.gateway->chat(req);
        if (auto parsed = parse_rho_response(response, agent_keys)) {
            out.rho.rho = std::move(*parsed);
            out.rho.provenance = ExpectedReturnVector::Provenance::LlmParsed;
        } else {
            out.warning = true; // fall back to the rule estimate
        }
    } else {
        response = json{{"rho", out.rho.rho}, {"provenance", "rule_estimated"}}.dump();
    }
    out.log.transcript.emplace_back(prompt, response);

    AllocationProblem problem;
    problem.rho = out.rho.rho;
    problem.cov = in.estimated.cov;
    problem.history = in.estimated.history;
    problem.lambda1 = in.lambda1;
    problem.lambda2 = in.lambda2;
    problem.alpha = in.alpha;
    OptimizeDiagnostics diag;
    out.weights = optimize(problem, &diag);

    out.log.outcome = {{"weights", out.weights.omega},
                       {"objective", diag.objective},
                       {"rho", out.rho.rho},
                       {"rho_provenance",
                        out.rho.provenance == ExpectedReturnVector::Provenance::LlmParsed
                            ? "llm_parsed"
                            : "rule_estimated"},
                       {"fallback_warning", out.warning}};
    return out;
}

std::string consolidate_rule_mode(const std::string& agent, Date date,
                                  const std::string& case_text,
                                  const std::vector<std::string>& peer_notes) {
    std::string out = "Case from " + agent + " (" + date.to_string() + "): " + case_text +
                      "\nPeer notes:\n";
    std::set<std::string> seen;
    bool any = false;
    for (const auto& note : peer_notes) {
        if (!seen.insert(note).second) continue; // deduplicate identical notes
        out += "- " + note + "\n";
        any = true;
    }
    if (!any) out += "- (none)\n";
    return out;
}

EscResult run_esc(Date date, const std::vector<EscParticipant>& participants, Gateway* gateway,
                  double temperature, int rounds) {
    if (rounds < 1) throw ConfigError("ESC rounds must be >= 1");
    EscResult out;
    out.log.date = date;
    out.log.kind = "ESC";

    for (int round = 0; round < rounds; ++round) {
        for (const auto& presenter : participants) {
            if (presenter.ranked_cases.empty()) continue; // abstains
            const std::size_t pick =
                std::min<std::size_t>(round, presenter.ranked_cases.size() - 1);
            const std::string& case_text = presenter.ranked_cases[pick];

            std::vector<std::string> notes;
            for (const auto& peer : participants) {
                if (peer.agent == presenter.agent) continue;
                notes.push_back(peer.annotation);
            }
            std::string annotations;
            for (const auto& n : notes) annotations += "- " + n + "\n";
            if (annotations.empty()) annotations = "- (none)\n";

            const std::string prompt = render(builtin_template(TemplateName::Consolidate),
                                              {{"date", date.to_string()},
                                               {"agent", presenter.agent},
                                               {"case", case_text},
                                               {"annotations", annotations}});
            std::string insight;
            std::string response;
            if (gateway) {
                ChatRequest req;
                req.temperature = temperature;
                req.messages.push_back({"user", prompt});
                response = gateway->chat(req);
                insight = response;
            } else {
                insight = consolidate_rule_mode(presenter.agent, date, case_text, notes);
                response = insight;
            }
            out.log.transcript.emplace_back(prompt, response);
            out.insights.push_back(std::move(insight));
            out.presenters.push_back(presenter.agent);
        }
    }
    out.log.outcome = {{"insights", static_cast<int>(out.insights.size())},
                       {"rounds", rounds}};
    return out;
}

const char* to_string(TriggerKind k) {
    return k == TriggerKind::Daily ? "daily_amplitude" : "three_day_amplitude";
}

std::vector<std::pair<AssetId, TriggerKind>> detect_extreme(Date date, const Dataset& data,
                                                            double daily_threshold,
                                                            double three_day_threshold,
                                                            AmplitudeMode mode) {
    std::vector<std::pair<AssetId, TriggerKind>> fired;
    for (const auto& asset : data.assets()) {
        const auto bars = data.bars_through(asset.symbol, date);
        if (bars.empty() || bars.back().date != date) continue; // did not trade today
        if (bars.size() >= 2) {
            const double amp = mode == AmplitudeMode::HighLow
                                   ? daily_amplitude(bars)
                                   : daily_amplitude_close_to_close(bars);
            if (amp > daily_threshold) fired.emplace_back(asset, TriggerKind::Daily);
        }
        if (bars.size() >= 4 && cumulative_amplitude_3d(bars) > three_day_threshold) {
            fired.emplace_back(asset, TriggerKind::ThreeDay);
        }
    }
    return fired;
}

std::string render_crisis_context(const CrisisBundle& bundle) {
    const double l3 = bundle.lambda3;
    if (l3 < 0.0 || l3 > 1.0) throw ValidationError("lambda3 must lie in [0, 1]");
    std::string out = "Crisis presentation by " + bundle.crisis_agent + ".\n" +
                      "Holdings: " + bundle.holdings + "\n" + "Plan: " + bundle.plan + "\n";
    const bool tagged = l3 > 0.0 && l3 < 1.0;
    char tag[32];
    if (l3 < 1.0) {
        std::string manager_block;
        if (tagged) {
            std::snprintf(tag, sizeof(tag), "[weight: %.2f] ", 1.0 - l3);
            manager_block = tag;
        }
        out += manager_block + "Manager suggestion: " + bundle.manager_suggestion + "\n";
        out += manager_block + "Cause analysis: " + bundle.cause + "\n";
    }
    if (l3 > 0.0) {
        std::string peer_block;
        if (tagged) {
            std::snprintf(tag, sizeof(tag), "[weight: %.2f] ", l3);
            peer_block = tag;
        }
        out += peer_block + "Peer suggestions:\n";
        if (bundle.peer_suggestions.empty()) {
            out += "- (none)\n";
        } else {
            for (const auto& s : bundle.peer_suggestions) out += "- " + s + "\n";
        }
    }
    return out;
}

} // namespace hedgeflow
