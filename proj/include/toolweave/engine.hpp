#pragma once

#include "toolweave/gateway.hpp"
#include "toolweave/model.hpp"
#include "toolweave/prompts.hpp"
#include "toolweave/toolenv.hpp"

namespace toolweave {

struct RunConfig {
    int m = 3;              // max proposals per iteration
    int bs = 50;            // mini-batch size
    int iterations = 10;    // T
    int p = 20;             // total tool slots for evaluation
    uint64_t seed = 0;
    int executor_cap = 4;   // max tool calls per executor session
    int tool_timeout_ms = 10000;
    bool inverse_every_iteration = true;
    bool keep_trace = false;
    bool allow_api_reuse = false;  // may the proposer re-propose workflow APIs

    void validate() const;
    static RunConfig from_json(const Json& j);
    Json to_json() const;
};

// --- rendering helpers shared by prompt construction -----------------------------

std::string render_workflow(const Workflow& w);
std::string render_api_pool(const std::vector<ApiSpec>& batch);
std::string render_reports(const std::vector<ExecutionReport>& reports,
                           const std::vector<size_t>& indices);
std::string render_plan(const ApiSpec& api, const std::string& instruction);

// --- loop operations ---------------------------------------------------------------

// Uniform sample without replacement, excluding APIs already in the workflow
// (unless reuse is allowed). Deterministic under the rng state.
std::vector<ApiSpec> sample_minibatch(const Registry& reg, const Workflow& w, int bs, Rng& rng,
                                      bool allow_api_reuse = false);

// Up to m proposals, each resolving to a batch member; hallucinated names are
// dropped. Empty result on "None" or schema failure (degenerate iteration).
std::vector<Proposal> propose(const std::vector<ApiSpec>& batch, const Workflow& w, int m,
                              Backend& gateway, const PromptLibrary& prompts, CostLedger& ledger);

// One concurrent tool session per proposal; reports come back in proposal
// order regardless of completion order. A crashed session becomes a
// success=false report, never an aborted iteration.
std::vector<ExecutionReport> execute_proposals(const std::vector<Proposal>& proposals,
                                               Backend& gateway, const ToolEnv& env,
                                               const PromptLibrary& prompts, const RunConfig& cfg,
                                               CostLedger& ledger);

// Failed reports are stripped before prompting; zero survivors abstain with
// no LLM call. Out-of-range chain picks coerce to a new chain.
Selection select(const std::vector<ExecutionReport>& reports, const Workflow& w, Backend& gateway,
                 const PromptLibrary& prompts, CostLedger& ledger);

Workflow apply_selection(const Workflow& w, const Selection& sel,
                         const std::vector<ExecutionReport>& reports);

// Summarizes a nonempty workflow into a (query, response) pair.
std::pair<std::string, std::string> inverse_predict(const Workflow& w, Backend& gateway,
                                                    const PromptLibrary& prompts, CostLedger& ledger);

// The full generation loop for one sample.
Sample run_sample(const RunConfig& cfg, const Registry& reg, Backend& gateway, const ToolEnv& env,
                  const PromptLibrary& prompts);

}  // namespace toolweave
