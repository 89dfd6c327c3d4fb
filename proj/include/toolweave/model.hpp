#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolweave/util.hpp"

namespace toolweave {

// --- API specs ----------------------------------------------------------------

enum class ParamKind { String, Number, Boolean, Object, Array };

std::string to_string(ParamKind k);
ParamKind param_kind_from_string(const std::string& s);

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::String;
    bool required = false;
    std::string description;
};

// Live-mode routing; absent for simulated tools.
struct ApiEndpoint {
    std::string url;
    std::string method = "POST";
    std::map<std::string, std::string> headers;
};

struct ApiSpec {
    std::string id;
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    std::string category;  // empty = none
    std::optional<ApiEndpoint> endpoint;

    Json to_json() const;
    static ApiSpec from_json(const Json& j);
};

// --- execution steps / workflows ------------------------------------------------

enum class CallStatus { Success, Error, Timeout };

std::string to_string(CallStatus s);
CallStatus call_status_from_string(const std::string& s);

struct ToolCallRequest {
    std::string api_id;
    Json arguments = Json::object();

    Json to_json() const;
    static ToolCallRequest from_json(const Json& j);
};

struct ToolResponse {
    CallStatus status = CallStatus::Error;
    Json body;
    int64_t latency_ms = 0;

    bool ok() const { return status == CallStatus::Success; }
    Json to_json() const;
    static ToolResponse from_json(const Json& j);
};

struct ExecutionStep {
    ToolCallRequest request;
    ToolResponse response;
    size_t step_index = 0;

    Json to_json() const;
    static ExecutionStep from_json(const Json& j);
};

struct Chain {
    std::vector<ExecutionStep> steps;

    Json to_json() const;
    static Chain from_json(const Json& j);
};

struct Workflow {
    std::vector<Chain> chains;

    size_t total_steps() const;
    bool empty() const { return total_steps() == 0; }
    std::set<std::string> api_ids() const;

    Json to_json() const;
    static Workflow from_json(const Json& j);
};

// Append target for workflow_add: an existing chain index or a fresh chain.
struct ChainTarget {
    bool fresh = true;
    size_t index = 0;

    static ChainTarget new_chain() { return ChainTarget{true, 0}; }
    static ChainTarget at(size_t i) { return ChainTarget{false, i}; }
};

// Returns a workflow with exactly one more step; prior steps untouched.
// The step's step_index is assigned from its position in the target chain.
// Throws std::out_of_range for an invalid chain index.
Workflow workflow_add(const Workflow& w, ExecutionStep step, ChainTarget target);

// --- proposals / reports / selection --------------------------------------------

struct Proposal {
    std::string api_id;
    std::string instruction;

    Json to_json() const;
    static Proposal from_json(const Json& j);
};

struct ExecutionReport {
    Proposal proposal;
    std::vector<ExecutionStep> history;
    bool success = false;
    std::string justification;
    std::optional<size_t> successful_step_index;

    // success=true must point at a history step with status=success.
    bool consistent() const;

    Json to_json() const;
    static ExecutionReport from_json(const Json& j);
};

struct Selection {
    enum class Decision { Abstain, Pick };

    Decision decision = Decision::Abstain;
    std::optional<size_t> report_index;
    std::optional<size_t> chain_index;  // unset with pick = new chain
    bool new_chain = false;

    static Selection abstain() { return Selection{}; }
    static Selection pick(size_t report, ChainTarget target) {
        Selection s;
        s.decision = Decision::Pick;
        s.report_index = report;
        if (target.fresh) s.new_chain = true;
        else s.chain_index = target.index;
        return s;
    }

    Json to_json() const;
    static Selection from_json(const Json& j);
};

// --- cost accounting -------------------------------------------------------------

enum class Role { Proposer, Executor, Selector, Updater, Filter, Judge, Writer, Agent };
constexpr size_t kRoleCount = 8;

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct CostLedger {
    std::array<int64_t, kRoleCount> llm_calls{};
    int64_t executor_sessions = 0;
    int64_t tool_calls = 0;

    void add_llm(Role r, int64_t n = 1) { llm_calls[static_cast<size_t>(r)] += n; }
    int64_t llm(Role r) const { return llm_calls[static_cast<size_t>(r)]; }
    int64_t total_llm_calls() const;
    // proposer + executor + selector + updater: the generation-loop roles.
    int64_t generation_llm_calls() const;

    Json to_json() const;
    static CostLedger from_json(const Json& j);
};

// Componentwise sum; commutative and associative.
CostLedger ledger_merge(const CostLedger& a, const CostLedger& b);

// --- iteration trace / samples ----------------------------------------------------

struct IterationRecord {
    int t = 0;
    std::vector<std::string> batch_ids;
    std::vector<Proposal> proposals;
    std::vector<ExecutionReport> reports;
    Selection selection;
    std::string q_t;
    std::string r_t;

    Json to_json() const;
    static IterationRecord from_json(const Json& j);
};

struct Sample {
    uint64_t index = 0;
    uint64_t seed = 0;
    std::string query;
    std::string response;
    Workflow workflow;
    std::vector<std::string> negative_api_ids;
    CostLedger ledger;
    bool passed = false;
    std::optional<std::vector<IterationRecord>> iteration_trace;
    // Set when the run was cut short by a transport-level failure; such
    // samples should be regenerated, not kept as failure statistics.
    std::optional<std::string> aborted_reason;

    Json to_json() const;
    static Sample from_json(const Json& j);
};

// Empty result iff all Sample invariants hold. Violations are data, not errors.
// The negative-count contract |negatives| = p - n is checked only when p is
// given; library_size, when given, caps the expectation at library_size - n.
std::vector<std::string> sample_validate(const Sample& s,
                                         std::optional<int> p = std::nullopt,
                                         std::optional<size_t> library_size = std::nullopt);

}  // namespace toolweave
