#include "toolweave/engine.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>

namespace toolweave {

void RunConfig::validate() const {
    if (m < 1 || m > bs) throw std::invalid_argument("run config requires 1 <= m <= bs");
    if (iterations < 1) throw std::invalid_argument("run config requires iterations >= 1");
    if (p < 1) throw std::invalid_argument("run config requires p >= 1");
    if (executor_cap < 1) throw std::invalid_argument("run config requires executor_cap >= 1");
}

RunConfig RunConfig::from_json(const Json& j) {
    RunConfig c;
    c.m = j.value("m", c.m);
    c.bs = j.value("bs", c.bs);
    c.iterations = j.value("iterations", c.iterations);
    c.p = j.value("p", c.p);
    c.seed = j.value("seed", c.seed);
    c.executor_cap = j.value("executor_cap", c.executor_cap);
    c.tool_timeout_ms = j.value("tool_timeout_ms", c.tool_timeout_ms);
    c.inverse_every_iteration = j.value("inverse_every_iteration", c.inverse_every_iteration);
    c.keep_trace = j.value("keep_trace", c.keep_trace);
    c.allow_api_reuse = j.value("allow_api_reuse", c.allow_api_reuse);
    c.validate();
    return c;
}

Json RunConfig::to_json() const {
    return Json{{"m", m},
                {"bs", bs},
                {"iterations", iterations},
                {"p", p},
                {"seed", seed},
                {"executor_cap", executor_cap},
                {"tool_timeout_ms", tool_timeout_ms},
                {"inverse_every_iteration", inverse_every_iteration},
                {"keep_trace", keep_trace},
                {"allow_api_reuse", allow_api_reuse}};
}

std::string render_workflow(const Workflow& w) { return w.to_json().dump(); }

std::string render_api_pool(const std::vector<ApiSpec>& batch) {
    std::string out;
    for (const auto& api : batch) out += "- " + api.name + ": " + api.description + "\n";
    if (out.empty()) out = "(none)\n";
    return out;
}

std::string render_reports(const std::vector<ExecutionReport>& reports,
                           const std::vector<size_t>& indices) {
    Json arr = Json::array();
    for (size_t pos = 0; pos < indices.size(); ++pos) {
        const auto& rep = reports[indices[pos]];
        Json steps = Json::array();
        for (const auto& step : rep.history) {
            steps.push_back({{"step_index", step.step_index},
                             {"api_id", step.request.api_id},
                             {"tool_input", step.request.arguments},
                             {"response", step.response.to_json()}});
        }
        arr.push_back({{"index", pos},
                       {"api_id", rep.proposal.api_id},
                       {"instruction", rep.proposal.instruction},
                       {"success", rep.success},
                       {"justification", rep.justification},
                       {"history", steps}});
    }
    return arr.dump();
}

std::string render_plan(const ApiSpec& api, const std::string& instruction) {
    std::string out = "API: " + api.name + " (id: " + api.id + ")\n";
    out += "Description: " + api.description + "\n";
    Json params = Json::array();
    for (const auto& p : api.params) {
        params.push_back({{"name", p.name},
                          {"kind", to_string(p.kind)},
                          {"required", p.required},
                          {"description", p.description}});
    }
    out += "Parameters: " + params.dump() + "\n";
    out += "Instruction: " + instruction;
    return out;
}

std::vector<ApiSpec> sample_minibatch(const Registry& reg, const Workflow& w, int bs, Rng& rng,
                                      bool allow_api_reuse) {
    std::set<std::string> used;
    if (!allow_api_reuse) used = w.api_ids();

    std::vector<std::string> candidates;
    candidates.reserve(reg.size());
    for (const auto& id : reg.sorted_ids()) {
        if (!used.count(id)) candidates.push_back(id);
    }

    auto chosen = rng.sample(std::move(candidates), static_cast<size_t>(std::max(bs, 0)));
    std::vector<ApiSpec> batch;
    batch.reserve(chosen.size());
    for (const auto& id : chosen) batch.push_back(reg.get(id));
    return batch;
}

std::vector<Proposal> propose(const std::vector<ApiSpec>& batch, const Workflow& w, int m,
                              Backend& gateway, const PromptLibrary& prompts, CostLedger& ledger) {
    if (batch.empty()) throw std::invalid_argument("propose: batch must be nonempty");

    std::string prompt = prompts.render(
        "proposer", {{"workflow_cur", render_workflow(w)}, {"api_all", render_api_pool(batch)}});

    StructuredSchema item{"proposal",
                          {{"name", SchemaType::string_()}, {"instruction", SchemaType::string_()}}};
    StructuredSchema schema{"api_proposals",
                            {{"apis", SchemaType::optional_of(SchemaType::list_of(SchemaType::nested(item)))}}};

    Json reply;
    try {
        reply = chat_structured(gateway, {ChatMessage::user(prompt)}, schema, ledger, Role::Proposer,
                                /*none_ok=*/true);
    } catch (const SchemaError&) {
        return {};  // degenerate iteration
    }
    if (reply.is_null() || !reply.contains("apis") || reply.at("apis").is_null()) return {};

    std::vector<Proposal> proposals;
    for (const auto& pj : reply.at("apis")) {
        if (static_cast<int>(proposals.size()) >= m) break;
        std::string name = pj.value("name", std::string{});
        const ApiSpec* match = nullptr;
        for (const auto& api : batch) {
            if (api.name == name || api.id == name) {
                match = &api;
                break;
            }
        }
        if (!match) continue;  // hallucinated name, drop
        proposals.push_back(Proposal{match->id, pj.value("instruction", std::string{})});
    }
    return proposals;
}

namespace {

ExecutionReport run_executor_session(const Proposal& proposal, Backend& gateway, const ToolEnv& env,
                                     const PromptLibrary& prompts, const RunConfig& cfg,
                                     CostLedger& ledger) {
    ExecutionReport report;
    report.proposal = proposal;

    const ApiSpec& api = env.registry().get(proposal.api_id);
    std::string system_text =
        prompts.render("executor", {{"plan", render_plan(api, proposal.instruction)}});

    SessionResult session = tool_session(
        gateway, system_text, proposal.instruction.empty() ? "Follow the plan." : proposal.instruction,
        {api}, [&](const ToolCallRequest& req) { return env.execute(req, cfg.tool_timeout_ms); },
        SessionCaps{cfg.executor_cap, 0}, ledger, Role::Executor, /*count_per_turn=*/false);

    report.history = std::move(session.history);
    if (session.cap_exhausted) {
        report.success = false;
        report.justification = "tool call cap exhausted";
        return report;
    }

    // The session's closing text is the executor's own report.
    StructuredSchema schema{"execution_report",
                            {{"success", SchemaType::boolean()},
                             {"justification", SchemaType::optional_of(SchemaType::string_())},
                             {"successful_step_index", SchemaType::optional_of(SchemaType::integer())}}};
    Json parsed = Json::parse(strip_code_fences(session.final_text), nullptr, false);
    if (parsed.is_discarded() || !schema_validate(schema, parsed).empty()) {
        report.success = false;
        report.justification = "unparsable executor report";
        return report;
    }

    report.success = parsed.at("success").get<bool>();
    if (parsed.contains("justification") && parsed.at("justification").is_string()) {
        report.justification = parsed.at("justification").get<std::string>();
    }
    if (parsed.contains("successful_step_index") && parsed.at("successful_step_index").is_number()) {
        report.successful_step_index = parsed.at("successful_step_index").get<size_t>();
    }

    if (report.success && !report.consistent()) {
        // Tolerate a missing index by inferring the last successful step;
        // anything else inconsistent is demoted to failure.
        report.successful_step_index.reset();
        for (size_t i = report.history.size(); i-- > 0;) {
            if (report.history[i].response.ok()) {
                report.successful_step_index = i;
                break;
            }
        }
        if (!report.consistent()) {
            report.success = false;
            report.justification = "inconsistent report";
            report.successful_step_index.reset();
        }
    }
    return report;
}

}  // namespace

std::vector<ExecutionReport> execute_proposals(const std::vector<Proposal>& proposals,
                                               Backend& gateway, const ToolEnv& env,
                                               const PromptLibrary& prompts, const RunConfig& cfg,
                                               CostLedger& ledger) {
    std::vector<ExecutionReport> reports(proposals.size());
    std::vector<CostLedger> session_ledgers(proposals.size());
    std::vector<std::future<void>> futures;
    futures.reserve(proposals.size());

    for (size_t i = 0; i < proposals.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] {
            try {
                reports[i] = run_executor_session(proposals[i], gateway, env, prompts, cfg,
                                                  session_ledgers[i]);
            } catch (const std::exception& e) {
                reports[i] = ExecutionReport{proposals[i], {}, false,
                                             std::string("executor fault: ") + e.what(), std::nullopt};
            }
        }));
    }
    for (auto& f : futures) f.get();

    // Merge per-session ledgers in proposal order so accounting is
    // independent of completion order.
    for (size_t i = 0; i < proposals.size(); ++i) {
        ledger = ledger_merge(ledger, session_ledgers[i]);
        ledger.executor_sessions += 1;
    }
    return reports;
}

Selection select(const std::vector<ExecutionReport>& reports, const Workflow& w, Backend& gateway,
                 const PromptLibrary& prompts, CostLedger& ledger) {
    std::vector<size_t> successes;
    for (size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].success && reports[i].consistent()) successes.push_back(i);
    }
    if (successes.empty()) return Selection::abstain();

    std::string prompt = prompts.render("selector", {{"workflow_cur", render_workflow(w)},
                                                     {"api_reports", render_reports(reports, successes)}});

    StructuredSchema schema{
        "api_selection",
        {{"decision", SchemaType::enumeration({"pick", "abstain"})},
         {"report_index", SchemaType::optional_of(SchemaType::integer())},
         {"chain", SchemaType::optional_of(SchemaType::string_())},
         {"chain_index", SchemaType::optional_of(SchemaType::integer())}}};

    Json reply;
    try {
        reply = chat_structured(gateway, {ChatMessage::user(prompt)}, schema, ledger, Role::Selector);
    } catch (const SchemaError&) {
        return Selection::abstain();
    }

    if (reply.value("decision", std::string{"abstain"}) != "pick") return Selection::abstain();
    if (!reply.contains("report_index") || !reply.at("report_index").is_number()) {
        return Selection::abstain();
    }
    size_t presented = reply.at("report_index").get<size_t>();
    if (presented >= successes.size()) return Selection::abstain();
    size_t j = successes[presented];

    ChainTarget target = ChainTarget::new_chain();
    if (reply.contains("chain_index") && reply.at("chain_index").is_number()) {
        size_t k = reply.at("chain_index").get<size_t>();
        // Out-of-range chain ids coerce to a new chain.
        if (k < w.chains.size()) target = ChainTarget::at(k);
    } else if (reply.contains("chain") && reply.at("chain").is_string()) {
        std::string c = reply.at("chain").get<std::string>();
        if (c != "new") {
            char* end = nullptr;
            unsigned long k = std::strtoul(c.c_str(), &end, 10);
            if (end && *end == '\0' && k < w.chains.size()) target = ChainTarget::at(k);
        }
    }
    return Selection::pick(j, target);
}

Workflow apply_selection(const Workflow& w, const Selection& sel,
                         const std::vector<ExecutionReport>& reports) {
    if (sel.decision == Selection::Decision::Abstain) return w;
    const ExecutionReport& report = reports.at(*sel.report_index);
    ExecutionStep step = report.history.at(*report.successful_step_index);
    ChainTarget target = sel.new_chain ? ChainTarget::new_chain() : ChainTarget::at(*sel.chain_index);
    return workflow_add(w, std::move(step), target);
}

std::pair<std::string, std::string> inverse_predict(const Workflow& w, Backend& gateway,
                                                    const PromptLibrary& prompts, CostLedger& ledger) {
    if (w.empty()) throw std::invalid_argument("inverse_predict requires a nonempty workflow");

    std::string prompt = prompts.render("inverse_prediction", {{"api_use_chains", render_workflow(w)}});
    StructuredSchema schema{"inverse_prediction",
                            {{"query", SchemaType::string_()}, {"response", SchemaType::string_()}}};
    Json reply = chat_structured(gateway, {ChatMessage::user(prompt)}, schema, ledger, Role::Updater);

    auto q = reply.at("query").get<std::string>();
    auto r = reply.at("response").get<std::string>();
    if (q.empty() || r.empty()) throw SchemaError("inverse prediction returned empty query or response");
    return {std::move(q), std::move(r)};
}

Sample run_sample(const RunConfig& cfg, const Registry& reg, Backend& gateway, const ToolEnv& env,
                  const PromptLibrary& prompts) {
    cfg.validate();
    if (reg.size() == 0) throw RegistryError("run_sample requires a nonempty registry");

    Sample sample;
    sample.seed = cfg.seed;
    if (cfg.keep_trace) sample.iteration_trace.emplace();

    Rng rng(cfg.seed);
    Workflow w;
    std::string q, r;
    bool aborted = false;

    for (int t = 0; t < cfg.iterations; ++t) {
        IterationRecord record;
        record.t = t;
        try {
            auto batch = sample_minibatch(reg, w, cfg.bs, rng, cfg.allow_api_reuse);
            for (const auto& api : batch) record.batch_ids.push_back(api.id);
            if (!batch.empty()) {
                record.proposals = propose(batch, w, cfg.m, gateway, prompts, sample.ledger);
            }
            if (!record.proposals.empty()) {
                record.reports =
                    execute_proposals(record.proposals, gateway, env, prompts, cfg, sample.ledger);
                record.selection = select(record.reports, w, gateway, prompts, sample.ledger);
                w = apply_selection(w, record.selection, record.reports);
            }
            if (cfg.inverse_every_iteration && !w.empty()) {
                std::tie(q, r) = inverse_predict(w, gateway, prompts, sample.ledger);
                record.q_t = q;
                record.r_t = r;
            }
        } catch (const GatewayError& e) {
            aborted = true;
            sample.aborted_reason = std::string("gateway: ") + e.what();
        } catch (const SchemaError&) {
            aborted = true;  // sample marked failed, run continues elsewhere
        }
        if (sample.iteration_trace) sample.iteration_trace->push_back(std::move(record));
        if (aborted) break;
    }

    if (!aborted && !cfg.inverse_every_iteration && !w.empty()) {
        try {
            std::tie(q, r) = inverse_predict(w, gateway, prompts, sample.ledger);
        } catch (const GatewayError& e) {
            aborted = true;
            sample.aborted_reason = std::string("gateway: ") + e.what();
        } catch (const std::exception&) {
            aborted = true;
        }
    }

    sample.workflow = std::move(w);
    sample.query = q;
    sample.response = r;
    sample.passed = !aborted && !sample.workflow.empty() && !q.empty() && !r.empty();
    return sample;
}

}  // namespace toolweave
