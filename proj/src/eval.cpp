#include "toolweave/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace toolweave {

Json EvalRecord::to_json() const {
    Json j;
    j["schema"] = "eval_record.v1";
    j["sample_id"] = sample_id;
    j["framework"] = framework;
    Json steps = Json::array();
    for (const auto& s : predicted_calls) steps.push_back(s.to_json());
    j["predicted_calls"] = steps;
    j["response_text"] = response_text;
    j["recall"] = recall;
    j["success_rate"] = success_rate;
    if (qor) j["qor"] = *qor;
    j["flagged"] = flagged;
    j["ledger"] = ledger.to_json();
    return j;
}

EvalRecord EvalRecord::from_json(const Json& j) {
    EvalRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.framework = j.at("framework").get<std::string>();
    for (const auto& sj : j.value("predicted_calls", Json::array())) {
        r.predicted_calls.push_back(ExecutionStep::from_json(sj));
    }
    r.response_text = j.value("response_text", std::string{});
    r.recall = j.value("recall", 0.0);
    r.success_rate = j.value("success_rate", 0.0);
    if (j.contains("qor")) r.qor = j.at("qor").get<double>();
    r.flagged = j.value("flagged", false);
    r.ledger = CostLedger::from_json(j.value("ledger", Json::object()));
    return r;
}

double tool_recall(const std::set<std::string>& predicted, const std::set<std::string>& gt) {
    if (gt.empty()) throw std::invalid_argument("tool_recall: empty ground truth (malformed sample)");
    size_t hit = 0;
    for (const auto& id : gt) hit += predicted.count(id);
    return 100.0 * static_cast<double>(hit) / static_cast<double>(gt.size());
}

double success_rate(const std::vector<ExecutionStep>& predicted_steps,
                    const std::set<std::string>& gt) {
    if (gt.empty()) throw std::invalid_argument("success_rate: empty ground truth (malformed sample)");
    std::set<std::string> succeeded;
    for (const auto& s : predicted_steps) {
        if (s.response.ok() && gt.count(s.request.api_id)) succeeded.insert(s.request.api_id);
    }
    return 100.0 * static_cast<double>(succeeded.size()) / static_cast<double>(gt.size());
}

std::vector<ApiSpec> eval_toolset(const Sample& sample, const Registry& reg, uint64_t seed) {
    std::vector<std::string> ids;
    for (const auto& id : sample.workflow.api_ids()) ids.push_back(id);
    for (const auto& id : sample.negative_api_ids) ids.push_back(id);

    Rng rng(mix64(seed, 0x7001));
    rng.shuffle(ids);

    std::vector<ApiSpec> tools;
    tools.reserve(ids.size());
    for (const auto& id : ids) tools.push_back(reg.get(id));
    return tools;
}

std::string render_trace(const std::vector<ExecutionStep>& steps) {
    Json arr = Json::array();
    for (const auto& s : steps) {
        arr.push_back(Json{{"api_use_request", s.request.to_json()}, {"api_response", s.response.to_json()}});
    }
    return arr.dump();
}

EvalRecord drive_standard(const Sample& sample, Backend& agent, const ToolEnv& env,
                          const PromptLibrary& prompts, const EvalOptions& opts) {
    EvalRecord record;
    record.sample_id = std::to_string(sample.index);
    record.framework = "standard";

    auto tools = eval_toolset(sample, env.registry(), sample.seed);
    ChatRequest req{{ChatMessage::system(prompts.text("standard_agent")), ChatMessage::user(sample.query)},
                    tools,
                    std::nullopt};
    BackendReply reply = agent.complete(req);
    record.ledger.add_llm(Role::Agent, reply.attempts);

    for (const auto& tc : reply.tool_calls) {
        ToolResponse response = env.execute(tc.call, opts.tool_timeout_ms, &record.ledger);
        record.predicted_calls.push_back(ExecutionStep{tc.call, response, record.predicted_calls.size()});
    }
    return record;
}

EvalRecord drive_react(const Sample& sample, Backend& agent, const ToolEnv& env,
                       const PromptLibrary& prompts, const EvalOptions& opts) {
    EvalRecord record;
    record.sample_id = std::to_string(sample.index);
    record.framework = "react";

    auto tools = eval_toolset(sample, env.registry(), sample.seed);
    SessionCaps caps{/*max_tool_calls=*/1 << 20, /*max_llm_turns=*/opts.react_cap};
    SessionResult session = tool_session(
        agent, prompts.text("react_agent"), sample.query, tools,
        [&](const ToolCallRequest& req) { return env.execute(req, opts.tool_timeout_ms); }, caps,
        record.ledger, Role::Agent, /*count_per_turn=*/true);

    record.predicted_calls = std::move(session.history);
    record.flagged = session.cap_exhausted;
    return record;
}

EvalRecord drive_dfs(const Sample& sample, Backend& agent, const ToolEnv& env,
                     const PromptLibrary& prompts, const EvalOptions& opts) {
    EvalRecord record;
    record.sample_id = std::to_string(sample.index);
    record.framework = "dfs";

    auto tools = eval_toolset(sample, env.registry(), sample.seed);
    DfsBudget budget = opts.dfs_budget;
    budget.tool_timeout_ms = opts.tool_timeout_ms;
    BaselineResult result = dfs_annotate(sample.query, tools, agent, env, prompts, budget, Role::Agent);

    record.ledger = result.ledger;
    record.flagged = !result.passed;
    if (result.passed && result.workflow) {
        for (const auto& chain : result.workflow->chains) {
            for (const auto& step : chain.steps) {
                record.predicted_calls.push_back(step);
                record.predicted_calls.back().step_index = record.predicted_calls.size() - 1;
            }
        }
    } else {
        record.predicted_calls = result.explored;
        for (size_t i = 0; i < record.predicted_calls.size(); ++i) {
            record.predicted_calls[i].step_index = i;
        }
    }
    return record;
}

std::string write_response(const std::string& query, const std::vector<ExecutionStep>& trace,
                           Backend& writer, const PromptLibrary& prompts, CostLedger& ledger) {
    std::string prompt =
        prompts.render("writer", {{"query", query}, {"tool_use_trace", render_trace(trace)}});
    try {
        return chat_text(writer, {ChatMessage::user(prompt)}, ledger, Role::Writer);
    } catch (const GatewayError&) {
        return {};
    }
}

std::optional<double> qor_score(const std::string& query, const std::vector<ExecutionStep>& trace,
                                const std::string& pred_response, const std::string& gt_response,
                                Backend& judge, const PromptLibrary& prompts, CostLedger& ledger) {
    std::string prompt = prompts.render("judge", {{"query", query},
                                                  {"tool_use_trace", render_trace(trace)},
                                                  {"pred", pred_response},
                                                  {"gt", gt_response}});
    StructuredSchema schema{"qor_verdict",
                            {{"tasks_total", SchemaType::integer()},
                             {"per_task_scores", SchemaType::list_of(SchemaType::integer())}}};
    Json reply;
    try {
        reply = chat_structured(judge, {ChatMessage::user(prompt)}, schema, ledger, Role::Judge);
    } catch (const SchemaError&) {
        return std::nullopt;
    } catch (const GatewayError&) {
        return std::nullopt;
    }

    // The judge's own "final" is advisory; recompute the mean with
    // unaddressed tasks contributing zero.
    int64_t total = reply.at("tasks_total").get<int64_t>();
    double sum = 0.0;
    size_t listed = reply.at("per_task_scores").size();
    for (const auto& s : reply.at("per_task_scores")) {
        sum += std::clamp(s.get<double>(), 0.0, 100.0);
    }
    int64_t denom = std::max<int64_t>(total, static_cast<int64_t>(listed));
    if (denom <= 0) return 0.0;
    return sum / static_cast<double>(denom);
}

EvalRecord evaluate_sample(const Sample& sample, const std::string& framework,
                           const EvalBackends& backends, const ToolEnv& env,
                           const PromptLibrary& prompts, const EvalOptions& opts) {
    EvalRecord record;
    if (framework == "standard") record = drive_standard(sample, backends.agent, env, prompts, opts);
    else if (framework == "react") record = drive_react(sample, backends.agent, env, prompts, opts);
    else if (framework == "dfs") record = drive_dfs(sample, backends.agent, env, prompts, opts);
    else throw std::invalid_argument("unknown framework: " + framework);

    auto gt = sample.workflow.api_ids();
    std::set<std::string> predicted;
    for (const auto& s : record.predicted_calls) predicted.insert(s.request.api_id);
    record.recall = tool_recall(predicted, gt);
    record.success_rate = success_rate(record.predicted_calls, gt);

    record.response_text =
        write_response(sample.query, record.predicted_calls, backends.writer, prompts, record.ledger);
    if (record.response_text.empty()) {
        record.qor = 0.0;
    } else {
        record.qor = qor_score(sample.query, record.predicted_calls, record.response_text,
                               sample.response, backends.judge, prompts, record.ledger);
        if (!record.qor) record.flagged = true;
    }
    return record;
}

Json FrameworkSummary::to_json() const {
    return Json{{"framework", framework},
                {"records", records},
                {"mean_recall", mean_recall},
                {"mean_success_rate", mean_success},
                {"mean_qor", mean_qor},
                {"qor_records", qor_records},
                {"mean_llm_steps", mean_llm_steps},
                {"mean_tool_calls", mean_tool_calls}};
}

Json EvalSummary::to_json() const {
    Json arr = Json::array();
    for (const auto& f : frameworks) arr.push_back(f.to_json());
    return Json{{"schema", "eval_summary.v1"}, {"frameworks", arr}};
}

std::string EvalSummary::to_text_table() const {
    std::ostringstream out;
    out << std::left << std::setw(10) << "framework" << std::right << std::setw(8) << "records"
        << std::setw(10) << "recall" << std::setw(10) << "success" << std::setw(10) << "qor"
        << std::setw(12) << "llm_steps" << std::setw(12) << "tool_calls" << "\n";
    out << std::string(72, '-') << "\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& f : frameworks) {
        out << std::left << std::setw(10) << f.framework << std::right << std::setw(8) << f.records
            << std::setw(10) << f.mean_recall << std::setw(10) << f.mean_success << std::setw(10)
            << f.mean_qor << std::setw(12) << f.mean_llm_steps << std::setw(12) << f.mean_tool_calls
            << "\n";
    }
    return out.str();
}

EvalSummary aggregate_report(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw std::invalid_argument("aggregate_report requires records");

    std::map<std::string, FrameworkSummary> by_framework;
    for (const auto& r : records) {
        auto& f = by_framework[r.framework];
        f.framework = r.framework;
        f.records += 1;
        f.mean_recall += r.recall;
        f.mean_success += r.success_rate;
        if (r.qor) {
            f.mean_qor += *r.qor;
            f.qor_records += 1;
        }
        f.mean_llm_steps += static_cast<double>(r.ledger.llm(Role::Agent));
        f.mean_tool_calls += static_cast<double>(r.ledger.tool_calls);
    }

    EvalSummary summary;
    for (auto& [_, f] : by_framework) {
        double n = static_cast<double>(f.records);
        f.mean_recall /= n;
        f.mean_success /= n;
        f.mean_llm_steps /= n;
        f.mean_tool_calls /= n;
        if (f.qor_records) f.mean_qor /= static_cast<double>(f.qor_records);
        summary.frameworks.push_back(f);
    }
    return summary;
}

}  // namespace toolweave
