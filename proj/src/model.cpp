#include "toolweave/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace toolweave {

std::string to_string(ParamKind k) {
    switch (k) {
        case ParamKind::String: return "string";
        case ParamKind::Number: return "number";
        case ParamKind::Boolean: return "boolean";
        case ParamKind::Object: return "object";
        case ParamKind::Array: return "array";
    }
    return "string";
}

ParamKind param_kind_from_string(const std::string& s) {
    if (s == "string") return ParamKind::String;
    if (s == "number") return ParamKind::Number;
    if (s == "boolean") return ParamKind::Boolean;
    if (s == "object") return ParamKind::Object;
    if (s == "array") return ParamKind::Array;
    throw std::invalid_argument("unknown param kind: " + s);
}

Json ApiSpec::to_json() const {
    Json j;
    j["id"] = id;
    j["name"] = name;
    j["description"] = description;
    Json ps = Json::array();
    for (const auto& p : params) {
        ps.push_back({{"name", p.name},
                      {"kind", to_string(p.kind)},
                      {"required", p.required},
                      {"description", p.description}});
    }
    j["params"] = ps;
    if (!category.empty()) j["category"] = category;
    if (endpoint) {
        Json e;
        e["url"] = endpoint->url;
        e["method"] = endpoint->method;
        if (!endpoint->headers.empty()) e["headers"] = endpoint->headers;
        j["endpoint"] = e;
    }
    return j;
}

ApiSpec ApiSpec::from_json(const Json& j) {
    ApiSpec s;
    s.id = j.at("id").get<std::string>();
    s.name = j.at("name").get<std::string>();
    s.description = j.value("description", std::string{});
    if (j.contains("params")) {
        for (const auto& pj : j.at("params")) {
            ParamSpec p;
            p.name = pj.at("name").get<std::string>();
            p.kind = param_kind_from_string(pj.value("kind", std::string{"string"}));
            p.required = pj.value("required", false);
            p.description = pj.value("description", std::string{});
            s.params.push_back(std::move(p));
        }
    }
    s.category = j.value("category", std::string{});
    if (j.contains("endpoint")) {
        ApiEndpoint e;
        const auto& ej = j.at("endpoint");
        e.url = ej.at("url").get<std::string>();
        e.method = ej.value("method", std::string{"POST"});
        if (ej.contains("headers")) e.headers = ej.at("headers").get<std::map<std::string, std::string>>();
        s.endpoint = std::move(e);
    }
    return s;
}

std::string to_string(CallStatus s) {
    switch (s) {
        case CallStatus::Success: return "success";
        case CallStatus::Error: return "error";
        case CallStatus::Timeout: return "timeout";
    }
    return "error";
}

CallStatus call_status_from_string(const std::string& s) {
    if (s == "success") return CallStatus::Success;
    if (s == "error") return CallStatus::Error;
    if (s == "timeout") return CallStatus::Timeout;
    throw std::invalid_argument("unknown call status: " + s);
}

Json ToolCallRequest::to_json() const { return Json{{"api_id", api_id}, {"arguments", arguments}}; }

ToolCallRequest ToolCallRequest::from_json(const Json& j) {
    ToolCallRequest r;
    r.api_id = j.at("api_id").get<std::string>();
    r.arguments = j.value("arguments", Json::object());
    return r;
}

Json ToolResponse::to_json() const {
    return Json{{"status", to_string(status)}, {"body", body}, {"latency_ms", latency_ms}};
}

ToolResponse ToolResponse::from_json(const Json& j) {
    ToolResponse r;
    r.status = call_status_from_string(j.at("status").get<std::string>());
    r.body = j.value("body", Json());
    r.latency_ms = j.value("latency_ms", int64_t{0});
    return r;
}

Json ExecutionStep::to_json() const {
    return Json{{"step_index", step_index}, {"request", request.to_json()}, {"response", response.to_json()}};
}

ExecutionStep ExecutionStep::from_json(const Json& j) {
    ExecutionStep s;
    s.step_index = j.at("step_index").get<size_t>();
    s.request = ToolCallRequest::from_json(j.at("request"));
    s.response = ToolResponse::from_json(j.at("response"));
    return s;
}

Json Chain::to_json() const {
    Json steps_j = Json::array();
    for (const auto& s : steps) steps_j.push_back(s.to_json());
    return Json{{"steps", steps_j}};
}

Chain Chain::from_json(const Json& j) {
    Chain c;
    for (const auto& sj : j.at("steps")) c.steps.push_back(ExecutionStep::from_json(sj));
    return c;
}

size_t Workflow::total_steps() const {
    size_t n = 0;
    for (const auto& c : chains) n += c.steps.size();
    return n;
}

std::set<std::string> Workflow::api_ids() const {
    std::set<std::string> ids;
    for (const auto& c : chains)
        for (const auto& s : c.steps) ids.insert(s.request.api_id);
    return ids;
}

Json Workflow::to_json() const {
    Json cj = Json::array();
    for (const auto& c : chains) cj.push_back(c.to_json());
    return Json{{"chains", cj}};
}

Workflow Workflow::from_json(const Json& j) {
    Workflow w;
    for (const auto& cj : j.at("chains")) w.chains.push_back(Chain::from_json(cj));
    return w;
}

Workflow workflow_add(const Workflow& w, ExecutionStep step, ChainTarget target) {
    Workflow out = w;
    if (target.fresh) {
        step.step_index = 0;
        Chain c;
        c.steps.push_back(std::move(step));
        out.chains.push_back(std::move(c));
        return out;
    }
    if (target.index >= out.chains.size()) {
        throw std::out_of_range("workflow_add: chain index " + std::to_string(target.index) +
                                " out of range (have " + std::to_string(out.chains.size()) + " chains)");
    }
    auto& chain = out.chains[target.index];
    step.step_index = chain.steps.size();
    chain.steps.push_back(std::move(step));
    return out;
}

Json Proposal::to_json() const { return Json{{"api_id", api_id}, {"instruction", instruction}}; }

Proposal Proposal::from_json(const Json& j) {
    return Proposal{j.at("api_id").get<std::string>(), j.value("instruction", std::string{})};
}

bool ExecutionReport::consistent() const {
    if (!success) return true;
    if (!successful_step_index) return false;
    size_t i = *successful_step_index;
    return i < history.size() && history[i].response.ok();
}

Json ExecutionReport::to_json() const {
    Json j;
    j["proposal"] = proposal.to_json();
    Json hj = Json::array();
    for (const auto& s : history) hj.push_back(s.to_json());
    j["history"] = hj;
    j["success"] = success;
    j["justification"] = justification;
    if (successful_step_index) j["successful_step_index"] = *successful_step_index;
    return j;
}

ExecutionReport ExecutionReport::from_json(const Json& j) {
    ExecutionReport r;
    r.proposal = Proposal::from_json(j.at("proposal"));
    for (const auto& sj : j.at("history")) r.history.push_back(ExecutionStep::from_json(sj));
    r.success = j.at("success").get<bool>();
    r.justification = j.value("justification", std::string{});
    if (j.contains("successful_step_index")) r.successful_step_index = j.at("successful_step_index").get<size_t>();
    return r;
}

Json Selection::to_json() const {
    Json j;
    j["decision"] = decision == Decision::Pick ? "pick" : "abstain";
    if (report_index) j["report_index"] = *report_index;
    if (decision == Decision::Pick) {
        if (new_chain) j["chain"] = "new";
        else if (chain_index) j["chain"] = *chain_index;
    }
    return j;
}

Selection Selection::from_json(const Json& j) {
    Selection s;
    s.decision = j.at("decision").get<std::string>() == "pick" ? Decision::Pick : Decision::Abstain;
    if (j.contains("report_index")) s.report_index = j.at("report_index").get<size_t>();
    if (j.contains("chain")) {
        if (j.at("chain").is_string()) s.new_chain = true;
        else s.chain_index = j.at("chain").get<size_t>();
    }
    return s;
}

std::string to_string(Role r) {
    switch (r) {
        case Role::Proposer: return "proposer";
        case Role::Executor: return "executor";
        case Role::Selector: return "selector";
        case Role::Updater: return "updater";
        case Role::Filter: return "filter";
        case Role::Judge: return "judge";
        case Role::Writer: return "writer";
        case Role::Agent: return "agent";
    }
    return "agent";
}

Role role_from_string(const std::string& s) {
    static const std::map<std::string, Role> lut = {
        {"proposer", Role::Proposer}, {"executor", Role::Executor}, {"selector", Role::Selector},
        {"updater", Role::Updater},   {"filter", Role::Filter},     {"judge", Role::Judge},
        {"writer", Role::Writer},     {"agent", Role::Agent}};
    auto it = lut.find(s);
    if (it == lut.end()) throw std::invalid_argument("unknown role: " + s);
    return it->second;
}

int64_t CostLedger::total_llm_calls() const {
    int64_t n = 0;
    for (int64_t c : llm_calls) n += c;
    return n;
}

int64_t CostLedger::generation_llm_calls() const {
    return llm(Role::Proposer) + llm(Role::Executor) + llm(Role::Selector) + llm(Role::Updater);
}

Json CostLedger::to_json() const {
    Json calls = Json::object();
    for (size_t i = 0; i < kRoleCount; ++i) {
        if (llm_calls[i] != 0) calls[to_string(static_cast<Role>(i))] = llm_calls[i];
    }
    return Json{{"llm_calls", calls}, {"executor_sessions", executor_sessions}, {"tool_calls", tool_calls}};
}

CostLedger CostLedger::from_json(const Json& j) {
    CostLedger l;
    if (j.contains("llm_calls")) {
        for (auto it = j.at("llm_calls").begin(); it != j.at("llm_calls").end(); ++it) {
            l.llm_calls[static_cast<size_t>(role_from_string(it.key()))] = it.value().get<int64_t>();
        }
    }
    l.executor_sessions = j.value("executor_sessions", int64_t{0});
    l.tool_calls = j.value("tool_calls", int64_t{0});
    return l;
}

CostLedger ledger_merge(const CostLedger& a, const CostLedger& b) {
    CostLedger out = a;
    for (size_t i = 0; i < kRoleCount; ++i) out.llm_calls[i] += b.llm_calls[i];
    out.executor_sessions += b.executor_sessions;
    out.tool_calls += b.tool_calls;
    return out;
}

Json IterationRecord::to_json() const {
    Json j;
    j["t"] = t;
    j["batch_ids"] = batch_ids;
    Json pj = Json::array();
    for (const auto& p : proposals) pj.push_back(p.to_json());
    j["proposals"] = pj;
    Json rj = Json::array();
    for (const auto& r : reports) rj.push_back(r.to_json());
    j["reports"] = rj;
    j["selection"] = selection.to_json();
    j["q_t"] = q_t;
    j["r_t"] = r_t;
    return j;
}

IterationRecord IterationRecord::from_json(const Json& j) {
    IterationRecord r;
    r.t = j.at("t").get<int>();
    r.batch_ids = j.at("batch_ids").get<std::vector<std::string>>();
    for (const auto& pj : j.at("proposals")) r.proposals.push_back(Proposal::from_json(pj));
    for (const auto& rj : j.at("reports")) r.reports.push_back(ExecutionReport::from_json(rj));
    r.selection = Selection::from_json(j.at("selection"));
    r.q_t = j.value("q_t", std::string{});
    r.r_t = j.value("r_t", std::string{});
    return r;
}

Json Sample::to_json() const {
    Json j;
    j["schema"] = "sample.v1";
    j["index"] = index;
    j["seed"] = seed;
    j["query"] = query;
    j["response"] = response;
    j["workflow"] = workflow.to_json();
    j["negative_api_ids"] = negative_api_ids;
    j["ledger"] = ledger.to_json();
    j["passed"] = passed;
    if (iteration_trace) {
        Json tj = Json::array();
        for (const auto& it : *iteration_trace) tj.push_back(it.to_json());
        j["iteration_trace"] = tj;
    }
    if (aborted_reason) j["aborted_reason"] = *aborted_reason;
    return j;
}

Sample Sample::from_json(const Json& j) {
    Sample s;
    s.index = j.value("index", uint64_t{0});
    s.seed = j.value("seed", uint64_t{0});
    s.query = j.at("query").get<std::string>();
    s.response = j.at("response").get<std::string>();
    s.workflow = Workflow::from_json(j.at("workflow"));
    s.negative_api_ids = j.value("negative_api_ids", std::vector<std::string>{});
    s.ledger = CostLedger::from_json(j.value("ledger", Json::object()));
    s.passed = j.value("passed", false);
    if (j.contains("iteration_trace")) {
        std::vector<IterationRecord> trace;
        for (const auto& tj : j.at("iteration_trace")) trace.push_back(IterationRecord::from_json(tj));
        s.iteration_trace = std::move(trace);
    }
    if (j.contains("aborted_reason")) s.aborted_reason = j.at("aborted_reason").get<std::string>();
    return s;
}

std::vector<std::string> sample_validate(const Sample& s, std::optional<int> p,
                                         std::optional<size_t> library_size) {
    std::vector<std::string> violations;

    if (s.passed) {
        if (s.workflow.empty()) violations.push_back("pass requires nonempty workflow");
        if (s.query.empty()) violations.push_back("pass requires nonempty query");
        if (s.response.empty()) violations.push_back("pass requires nonempty response");
    }

    for (size_t ci = 0; ci < s.workflow.chains.size(); ++ci) {
        const auto& chain = s.workflow.chains[ci];
        if (chain.steps.empty()) violations.push_back("chain " + std::to_string(ci) + " is empty");
        for (size_t si = 0; si < chain.steps.size(); ++si) {
            if (chain.steps[si].step_index != si) {
                violations.push_back("chain " + std::to_string(ci) + " step_index not contiguous at " +
                                     std::to_string(si));
                break;
            }
        }
    }

    auto positives = s.workflow.api_ids();
    std::set<std::string> negatives(s.negative_api_ids.begin(), s.negative_api_ids.end());
    if (negatives.size() != s.negative_api_ids.size()) violations.push_back("duplicate negative ids");
    for (const auto& n : negatives) {
        if (positives.count(n)) {
            violations.push_back("negatives intersect positives");
            break;
        }
        if (n.empty()) violations.push_back("empty negative id");
    }

    for (int64_t c : s.ledger.llm_calls) {
        if (c < 0) {
            violations.push_back("negative llm call count");
            break;
        }
    }
    if (s.ledger.executor_sessions < 0) violations.push_back("negative executor_sessions");
    if (s.ledger.tool_calls < 0) violations.push_back("negative tool_calls");

    if (p) {
        size_t n = positives.size();
        if (n > static_cast<size_t>(*p)) {
            violations.push_back("positives exceed p");
        } else {
            size_t want = static_cast<size_t>(*p) - n;
            if (library_size && *library_size >= n) want = std::min(want, *library_size - n);
            if (s.negative_api_ids.size() != want) {
                violations.push_back("negative count " + std::to_string(s.negative_api_ids.size()) +
                                     " != expected " + std::to_string(want));
            }
        }
    }

    return violations;
}

}  // namespace toolweave
