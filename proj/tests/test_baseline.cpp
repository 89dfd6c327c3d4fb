#include <doctest.h>

#include "test_support.hpp"
#include "toolweave/baseline.hpp"
#include "toolweave/eval.hpp"

using namespace toolweave;
using namespace toolweave::testing;

namespace {

DfsBudget small_budget(int llm = 30, int depth = 6) {
    DfsBudget b;
    b.max_llm_calls = llm;
    b.max_depth = depth;
    b.tool_timeout_ms = 1000;
    return b;
}

}  // namespace

TEST_CASE("generate_query: scripted generator produces a fixed query naming the subset") {
    auto backend = oracle_backend();
    CostLedger ledger;
    std::vector<ApiSpec> subset{make_api("w", "weather_now", "current weather"),
                                make_api("f", "forecast_week", "weekly forecast")};
    std::string q = generate_query(subset, *backend, PromptLibrary::builtin(), ledger);
    CHECK(q.find("weather_now") != std::string::npos);
    CHECK(q.find("forecast_week") != std::string::npos);
    CHECK(ledger.llm(Role::Agent) == 1);

    CHECK(generate_query(subset, *backend, PromptLibrary::builtin(), ledger) == q);
    CHECK_THROWS_AS(generate_query({}, *backend, PromptLibrary::builtin(), ledger),
                    std::invalid_argument);
}

TEST_CASE("generate_query still succeeds when the subset contains an unsolvable api") {
    auto backend = oracle_backend();
    CostLedger ledger;
    std::vector<ApiSpec> subset{make_api("u", "doomed_api", "never works")};
    CHECK(!generate_query(subset, *backend, PromptLibrary::builtin(), ledger).empty());
}

TEST_CASE("dfs_annotate: solvable scenario succeeds on the first path with minimal cost") {
    Registry reg = make_registry(3);
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0));
    auto backend = oracle_backend();

    auto result = dfs_annotate("fetch topic records", reg.specs(), *backend, env,
                               PromptLibrary::builtin(), small_budget());
    CHECK(result.passed);
    REQUIRE(result.workflow);
    CHECK(result.workflow->total_steps() == 1);
    CHECK(result.explored.size() == 1);
    CHECK(result.ledger.llm(Role::Agent) == 2);  // one action turn + one answer turn
    CHECK(result.ledger.tool_calls == 1);
}

TEST_CASE("dfs_annotate: first branch fails, second succeeds, abandoned cost is kept") {
    Registry reg({make_api("bad", "bad_api", "broken service"),
                  make_api("good", "good_api", "working service")},
                 "fixture");
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0, {"bad"}));
    auto backend = oracle_backend();

    auto result = dfs_annotate("get the data", reg.specs(), *backend, env, PromptLibrary::builtin(),
                               small_budget());
    CHECK(result.passed);
    REQUIRE(result.workflow);
    CHECK(result.workflow->total_steps() == 1);
    CHECK(result.workflow->api_ids().count("good"));
    // both the failed and the successful call were executed and charged
    CHECK(result.explored.size() == 2);
    CHECK(result.ledger.tool_calls == 2);
    CHECK(result.ledger.llm(Role::Agent) > 2);
}

TEST_CASE("dfs_annotate: unsolvable scenario fails without passing") {
    Registry reg({make_api("u1", "dead_one", "always down"), make_api("u2", "dead_two", "always down")},
                 "fixture");
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0, {"u1", "u2"}));
    auto backend = oracle_backend();

    auto result = dfs_annotate("do the impossible", reg.specs(), *backend, env,
                               PromptLibrary::builtin(), small_budget());
    CHECK(!result.passed);
    CHECK(!result.workflow);
    CHECK(result.ledger.tool_calls >= 2);  // tried both tools
}

TEST_CASE("dfs_annotate: a looping scripted model consumes exactly the llm budget") {
    Registry reg = make_registry(2);
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0));
    // never answers, always asks for another call
    auto rules = parse_script(R"([
        {"match": "prefix", "value": "[system]", "act": "react_steps",
         "params": {"calls": 1000000}}
    ])", "loop");
    ScriptedBackend backend(rules, "loop");

    auto result = dfs_annotate("never done", reg.specs(), backend, env, PromptLibrary::builtin(),
                               small_budget(30, 4));
    CHECK(!result.passed);
    CHECK(result.ledger.llm(Role::Agent) == 30);
}

TEST_CASE("dfs never revisits an identical state digest") {
    Registry reg({make_api("only", "only_api", "sole tool")}, "fixture");
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0, {"only"}));
    // Always calls the same tool with the same arguments: the child state
    // repeats, so the walk must terminate long before the llm budget.
    auto rules = parse_script(R"([
        {"match": "prefix", "value": "[system]", "tool_call": {"api": "only", "arguments": {}}}
    ])", "repeat");
    ScriptedBackend backend(rules, "repeat");

    auto result = dfs_annotate("loop forever?", reg.specs(), backend, env, PromptLibrary::builtin(),
                               small_budget(50, 6));
    CHECK(!result.passed);
    CHECK(result.ledger.llm(Role::Agent) < 10);
}

TEST_CASE("with an oracle model the dfs trace degenerates to the react driver's trace") {
    Registry reg = make_registry(4);
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0));
    auto backend = oracle_backend();

    Sample sample;
    sample.index = 0;
    sample.seed = 3;
    sample.query = "pull the records";
    sample.response = "records pulled";
    sample.passed = true;
    sample.workflow = workflow_add(sample.workflow,
                                   ExecutionStep{{"api_1", Json::object()},
                                                 {CallStatus::Success, Json(), 2}, 0},
                                   ChainTarget::new_chain());
    sample.negative_api_ids = {"api_0", "api_2"};

    EvalOptions opts;
    opts.tool_timeout_ms = 1000;
    auto react = drive_react(sample, *backend, env, PromptLibrary::builtin(), opts);
    auto dfs = drive_dfs(sample, *backend, env, PromptLibrary::builtin(), opts);

    REQUIRE(react.predicted_calls.size() == dfs.predicted_calls.size());
    for (size_t i = 0; i < react.predicted_calls.size(); ++i) {
        CHECK(react.predicted_calls[i].to_json() == dfs.predicted_calls[i].to_json());
    }
    CHECK(react.ledger.llm(Role::Agent) == dfs.ledger.llm(Role::Agent));
}

TEST_CASE("run_baseline aggregates: pass rate over all, tool uses over passed only") {
    Registry reg = make_registry(10);
    std::vector<std::string> unsolvable{"api_0", "api_1", "api_2", "api_3"};
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0, unsolvable));
    auto backend = oracle_backend();

    auto run = run_baseline(reg, *backend, env, PromptLibrary::builtin(), 10, 1, small_budget(), 77);
    REQUIRE(run.results.size() == 10);

    size_t passed = 0;
    for (const auto& r : run.results) passed += r.passed;
    CHECK(run.aggregate.pass_rate == doctest::Approx(100.0 * passed / 10.0));
    CHECK(run.aggregate.pass_rate < 100.0);
    CHECK(run.aggregate.pass_rate > 0.0);

    double tools_passed = 0;
    for (const auto& r : run.results) {
        if (r.passed) tools_passed += static_cast<double>(r.workflow->total_steps());
    }
    CHECK(run.aggregate.mean_tool_uses_passed == doctest::Approx(tools_passed / passed));
    CHECK(run.aggregate.mean_llm_cost > 0.0);
}

TEST_CASE("run_baseline with all-solvable scenarios passes everything") {
    Registry reg = make_registry(6);
    auto env = ToolEnv::simulated(reg, mixed_profile(5, 0.0));
    auto backend = oracle_backend();
    auto run = run_baseline(reg, *backend, env, PromptLibrary::builtin(), 5, 2, small_budget(), 3);
    CHECK(run.aggregate.pass_rate == 100.0);
}
