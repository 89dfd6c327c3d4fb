#include "toolweave/baseline.hpp"

#include <set>

namespace toolweave {

DfsBudget DfsBudget::from_json(const Json& j) {
    DfsBudget b;
    b.max_llm_calls = j.value("max_llm_calls", b.max_llm_calls);
    b.max_depth = j.value("max_depth", b.max_depth);
    b.max_alternatives = j.value("max_alternatives", b.max_alternatives);
    b.tool_timeout_ms = j.value("tool_timeout_ms", b.tool_timeout_ms);
    if (b.max_llm_calls < 1 || b.max_depth < 1) {
        throw std::invalid_argument("dfs budget must be positive");
    }
    return b;
}

Json DfsBudget::to_json() const {
    return Json{{"max_llm_calls", max_llm_calls},
                {"max_depth", max_depth},
                {"max_alternatives", max_alternatives},
                {"tool_timeout_ms", tool_timeout_ms}};
}

Json BaselineResult::to_json() const {
    Json j;
    j["schema"] = "baseline_result.v1";
    j["generator"] = "dfs-baseline";
    j["query"] = query;
    j["passed"] = passed;
    if (workflow) j["workflow"] = workflow->to_json();
    Json ex = Json::array();
    for (const auto& s : explored) ex.push_back(s.to_json());
    j["explored"] = ex;
    j["final_text"] = final_text;
    j["ledger"] = ledger.to_json();
    return j;
}

BaselineResult BaselineResult::from_json(const Json& j) {
    BaselineResult r;
    r.query = j.at("query").get<std::string>();
    r.passed = j.at("passed").get<bool>();
    if (j.contains("workflow")) r.workflow = Workflow::from_json(j.at("workflow"));
    for (const auto& sj : j.value("explored", Json::array())) {
        r.explored.push_back(ExecutionStep::from_json(sj));
    }
    r.final_text = j.value("final_text", std::string{});
    r.ledger = CostLedger::from_json(j.value("ledger", Json::object()));
    return r;
}

std::string generate_query(const std::vector<ApiSpec>& subset, Backend& gateway,
                           const PromptLibrary& prompts, CostLedger& ledger) {
    if (subset.empty()) throw std::invalid_argument("generate_query requires a nonempty subset");
    std::string prompt = prompts.render("query_gen", {{"api_all", render_api_pool(subset)}});
    StructuredSchema schema{"hypothetical_query", {{"query", SchemaType::string_()}}};

    // One retry on schema failure, then this baseline sample fails.
    Json reply = chat_structured(gateway, {ChatMessage::user(prompt)}, schema, ledger, Role::Agent);
    return reply.at("query").get<std::string>();
}

namespace {

struct DfsWalk {
    Backend& gateway;
    const ToolEnv& env;
    const std::vector<ApiSpec>& tools;
    const DfsBudget& budget;
    Role role;
    CostLedger& ledger;
    std::set<std::string> visited;
    std::vector<ExecutionStep> explored;
    std::vector<ExecutionStep> path;
    int64_t llm_calls = 0;
    bool exhausted = false;

    bool budget_left() const { return llm_calls < budget.max_llm_calls; }

    // Returns the model-declared final answer when a grounded solution was
    // found below this node.
    std::optional<std::string> visit(const std::vector<ChatMessage>& node, int depth) {
        std::vector<ChatMessage> context = node;
        for (int alt = 0; alt <= budget.max_alternatives; ++alt) {
            if (!budget_left()) {
                exhausted = true;
                return std::nullopt;
            }
            BackendReply reply = gateway.complete(ChatRequest{context, tools, std::nullopt});
            ++llm_calls;
            ledger.add_llm(role, reply.attempts);

            if (reply.tool_calls.empty()) {
                std::string text = trim(reply.content);
                bool dead_end = to_lower(text).rfind("dead end", 0) == 0;
                bool grounded = false;
                for (const auto& s : path) grounded = grounded || s.response.ok();
                if (!dead_end && grounded) return reply.content;
                // Declared dead end, or an answer with no grounding: try an
                // alternative at this node.
                context.push_back(ChatMessage::assistant(reply.content));
                context.push_back(ChatMessage::user(
                    "That is not an acceptable final answer here. Try a different action."));
                continue;
            }

            const ChatToolCall& tc = reply.tool_calls.front();
            ToolResponse response = env.execute(tc.call, budget.tool_timeout_ms);
            ledger.tool_calls += 1;
            ExecutionStep step{tc.call, response, path.size()};
            explored.push_back(step);

            std::vector<ChatMessage> child = context;
            child.push_back(ChatMessage::assistant_calls(reply.content, {tc}));
            child.push_back(ChatMessage::tool_result(tc.id, response.to_json().dump()));

            std::string digest = sha256_hex(render_conversation(ChatRequest{child, {}, std::nullopt}));
            bool fresh = visited.insert(digest).second;

            if (response.ok() && fresh && depth + 1 <= budget.max_depth) {
                path.push_back(step);
                auto found = visit(child, depth + 1);
                if (found) return found;
                path.pop_back();
                if (exhausted) return std::nullopt;
            }

            // Failed call, revisited state, or depth cap: surface the failed
            // attempt and ask for an alternative.
            context.push_back(ChatMessage::assistant_calls(reply.content, {tc}));
            context.push_back(ChatMessage::tool_result(tc.id, response.to_json().dump()));
            context.push_back(
                ChatMessage::user("That attempt did not work out. Try a different action."));
        }
        return std::nullopt;
    }
};

}  // namespace

BaselineResult dfs_annotate(const std::string& query, const std::vector<ApiSpec>& tools,
                            Backend& gateway, const ToolEnv& env, const PromptLibrary& prompts,
                            DfsBudget budget, Role role) {
    if (budget.max_llm_calls < 1 || budget.max_depth < 1) {
        throw std::invalid_argument("dfs_annotate requires a positive budget");
    }

    BaselineResult result;
    result.query = query;

    DfsWalk walk{gateway, env, tools, budget, role, result.ledger, {}, {}, {}, 0, false};
    std::vector<ChatMessage> root{ChatMessage::system(prompts.text("react_agent")),
                                  ChatMessage::user(query)};
    auto answer = walk.visit(root, 0);
    result.explored = std::move(walk.explored);

    if (answer) {
        result.passed = true;
        result.final_text = *answer;
        Workflow w;
        for (auto step : walk.path) {
            w = workflow_add(w, std::move(step), w.chains.empty() ? ChainTarget::new_chain()
                                                                  : ChainTarget::at(0));
        }
        result.workflow = std::move(w);
    }
    return result;
}

BaselineAggregate aggregate_baseline(const std::vector<BaselineResult>& results) {
    BaselineAggregate agg;
    if (results.empty()) return agg;

    size_t passed = 0;
    double tool_uses = 0.0, llm_cost = 0.0, tool_cost = 0.0;
    for (const auto& r : results) {
        if (r.passed) {
            ++passed;
            tool_uses += static_cast<double>(r.workflow ? r.workflow->total_steps() : 0);
        }
        llm_cost += static_cast<double>(r.ledger.total_llm_calls());
        tool_cost += static_cast<double>(r.ledger.tool_calls);
    }
    agg.pass_rate = 100.0 * static_cast<double>(passed) / static_cast<double>(results.size());
    agg.mean_tool_uses_passed = passed ? tool_uses / static_cast<double>(passed) : 0.0;
    agg.mean_llm_cost = llm_cost / static_cast<double>(results.size());
    agg.mean_tool_cost = tool_cost / static_cast<double>(results.size());
    return agg;
}

Json BaselineAggregate::to_json() const {
    return Json{{"pass_rate", pass_rate},
                {"mean_tool_uses_passed", mean_tool_uses_passed},
                {"mean_llm_cost", mean_llm_cost},
                {"mean_tool_cost", mean_tool_cost}};
}

BaselineRun run_baseline(const Registry& reg, Backend& gateway, const ToolEnv& env,
                         const PromptLibrary& prompts, int count, int subset_size, DfsBudget budget,
                         uint64_t seed) {
    if (count < 1) throw std::invalid_argument("run_baseline requires count >= 1");

    BaselineRun run;
    for (int i = 0; i < count; ++i) {
        Rng rng(mix64(seed, static_cast<uint64_t>(i)));
        auto ids = rng.sample(reg.sorted_ids(), static_cast<size_t>(subset_size));
        std::vector<ApiSpec> subset;
        for (const auto& id : ids) subset.push_back(reg.get(id));

        BaselineResult result;
        CostLedger query_ledger;
        try {
            std::string query = generate_query(subset, gateway, prompts, query_ledger);
            result = dfs_annotate(query, subset, gateway, env, prompts, budget);
        } catch (const std::exception& e) {
            result.passed = false;
            result.final_text = std::string("baseline sample failed: ") + e.what();
        }
        result.ledger = ledger_merge(result.ledger, query_ledger);
        run.results.push_back(std::move(result));
    }
    run.aggregate = aggregate_baseline(run.results);
    return run;
}

}  // namespace toolweave
