#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toolweave/engine.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/toolenv.hpp"

namespace toolweave {

struct DfsBudget {
    int max_llm_calls = 30;
    int max_depth = 8;
    int max_alternatives = 2;  // extra tries per node after the first
    int tool_timeout_ms = 10000;

    static DfsBudget from_json(const Json& j);
    Json to_json() const;
};

struct BaselineResult {
    std::string query;
    bool passed = false;
    std::optional<Workflow> workflow;       // set iff passed
    std::vector<ExecutionStep> explored;    // every executed call, branches included
    std::string final_text;
    CostLedger ledger;

    Json to_json() const;
    static BaselineResult from_json(const Json& j);
};

// Hypothetical user query for an API subset; no feasibility guarantee.
std::string generate_query(const std::vector<ApiSpec>& subset, Backend& gateway,
                           const PromptLibrary& prompts, CostLedger& ledger);

// Depth-first search over ReAct-style states: descend on a successful call,
// backtrack and re-ask for an alternative on a failed call or a declared dead
// end, never revisit an identical state digest. Terminates on a model-declared
// answer grounded by at least one successful call, or on budget exhaustion.
BaselineResult dfs_annotate(const std::string& query, const std::vector<ApiSpec>& tools,
                            Backend& gateway, const ToolEnv& env, const PromptLibrary& prompts,
                            DfsBudget budget, Role role = Role::Agent);

struct BaselineAggregate {
    double pass_rate = 0.0;                 // %
    double mean_tool_uses_passed = 0.0;     // averaged over passed samples only
    double mean_llm_cost = 0.0;             // averaged over all samples
    double mean_tool_cost = 0.0;

    Json to_json() const;
};

struct BaselineRun {
    std::vector<BaselineResult> results;
    BaselineAggregate aggregate;
};

BaselineAggregate aggregate_baseline(const std::vector<BaselineResult>& results);

// Query-first generation over `count` seeded API subsets.
BaselineRun run_baseline(const Registry& reg, Backend& gateway, const ToolEnv& env,
                         const PromptLibrary& prompts, int count, int subset_size, DfsBudget budget,
                         uint64_t seed);

}  // namespace toolweave
