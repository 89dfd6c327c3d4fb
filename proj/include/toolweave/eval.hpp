#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolweave/baseline.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/model.hpp"
#include "toolweave/toolenv.hpp"

namespace toolweave {

struct EvalRecord {
    std::string sample_id;
    std::string framework;  // standard | react | dfs
    std::vector<ExecutionStep> predicted_calls;
    std::string response_text;
    double recall = 0.0;        // [0,100]
    double success_rate = 0.0;  // [0,100], <= recall by construction
    std::optional<double> qor;  // absent when the judge reply was unusable
    bool flagged = false;       // cap/budget exhaustion or judge failure
    CostLedger ledger;

    Json to_json() const;
    static EvalRecord from_json(const Json& j);
};

// 100 * |predicted ∩ gt| / |gt|, set semantics. Empty gt is a malformed sample.
double tool_recall(const std::set<std::string>& predicted, const std::set<std::string>& gt);

// Share of ground-truth APIs that received at least one successful call.
double success_rate(const std::vector<ExecutionStep>& predicted_steps,
                    const std::set<std::string>& gt);

// Positives + negatives in a seeded shuffle; specs resolved via the registry.
std::vector<ApiSpec> eval_toolset(const Sample& sample, const Registry& reg, uint64_t seed);

struct EvalBackends {
    Backend& agent;
    Backend& writer;
    Backend& judge;
};

struct EvalOptions {
    int react_cap = 10;  // LLM turns
    DfsBudget dfs_budget;
    int tool_timeout_ms = 10000;
};

// Driver partials: predicted calls plus agent-role accounting.
EvalRecord drive_standard(const Sample& sample, Backend& agent, const ToolEnv& env,
                          const PromptLibrary& prompts, const EvalOptions& opts);
EvalRecord drive_react(const Sample& sample, Backend& agent, const ToolEnv& env,
                       const PromptLibrary& prompts, const EvalOptions& opts);
EvalRecord drive_dfs(const Sample& sample, Backend& agent, const ToolEnv& env,
                     const PromptLibrary& prompts, const EvalOptions& opts);

std::string render_trace(const std::vector<ExecutionStep>& steps);

// Unified response writer; a gateway failure yields an empty reply (QoR 0).
std::string write_response(const std::string& query, const std::vector<ExecutionStep>& trace,
                           Backend& writer, const PromptLibrary& prompts, CostLedger& ledger);

// LLM-judge score; the final value is recomputed locally from the per-task
// scores (unaddressed tasks contribute 0) and that recomputation wins.
std::optional<double> qor_score(const std::string& query, const std::vector<ExecutionStep>& trace,
                                const std::string& pred_response, const std::string& gt_response,
                                Backend& judge, const PromptLibrary& prompts, CostLedger& ledger);

// Full pipeline for one (sample, framework) pair: drive, metrics, writer, judge.
EvalRecord evaluate_sample(const Sample& sample, const std::string& framework,
                           const EvalBackends& backends, const ToolEnv& env,
                           const PromptLibrary& prompts, const EvalOptions& opts);

struct FrameworkSummary {
    std::string framework;
    size_t records = 0;
    double mean_recall = 0.0;
    double mean_success = 0.0;
    double mean_qor = 0.0;      // over records with a qor
    size_t qor_records = 0;
    double mean_llm_steps = 0.0;  // agent role
    double mean_tool_calls = 0.0;

    Json to_json() const;
};

struct EvalSummary {
    std::vector<FrameworkSummary> frameworks;

    Json to_json() const;
    std::string to_text_table() const;
};

EvalSummary aggregate_report(const std::vector<EvalRecord>& records);

}  // namespace toolweave
