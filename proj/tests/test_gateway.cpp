#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "test_support.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/schema.hpp"

using namespace toolweave;
using namespace toolweave::testing;

namespace {

// Independent random value generator over the closed schema set, for the
// serialize -> parse identity property.
Json random_value_for(const SchemaType& type, Rng& rng, int depth = 0);

Json random_value_for_schema(const StructuredSchema& schema, Rng& rng, int depth = 0) {
    Json out = Json::object();
    for (const auto& f : schema.fields) out[f.name] = random_value_for(f.type, rng, depth + 1);
    return out;
}

Json random_value_for(const SchemaType& type, Rng& rng, int depth) {
    using Kind = SchemaType::Kind;
    switch (type.kind) {
        case Kind::String: return "s" + hex8(rng.next());
        case Kind::Integer: return static_cast<int64_t>(rng.bounded(1000)) - 500;
        case Kind::Boolean: return rng.bounded(2) == 0;
        case Kind::Enum: return type.enum_values[rng.bounded(type.enum_values.size())];
        case Kind::List: {
            Json arr = Json::array();
            size_t n = depth > 3 ? 0 : rng.bounded(4);
            for (size_t i = 0; i < n; ++i) arr.push_back(random_value_for(*type.element, rng, depth + 1));
            return arr;
        }
        case Kind::Optional:
            if (rng.bounded(3) == 0) return Json();
            return random_value_for(*type.element, rng, depth + 1);
        case Kind::Nested: return random_value_for_schema(*type.object, rng, depth + 1);
    }
    return Json();
}

StructuredSchema random_schema(Rng& rng, int depth = 0);

SchemaType random_type(Rng& rng, int depth) {
    uint64_t pick = rng.bounded(depth >= 2 ? 4 : 7);
    switch (pick) {
        case 0: return SchemaType::string_();
        case 1: return SchemaType::integer();
        case 2: return SchemaType::boolean();
        case 3: return SchemaType::enumeration({"alpha", "beta", "gamma"});
        case 4: return SchemaType::list_of(random_type(rng, depth + 1));
        case 5: return SchemaType::optional_of(random_type(rng, depth + 1));
        default: return SchemaType::nested(random_schema(rng, depth + 1));
    }
}

StructuredSchema random_schema(Rng& rng, int depth) {
    StructuredSchema s;
    s.name = "schema_" + hex8(rng.next());
    size_t fields = 1 + rng.bounded(4);
    for (size_t i = 0; i < fields; ++i) {
        s.fields.push_back({"f" + std::to_string(i), random_type(rng, depth)});
    }
    return s;
}

}  // namespace

TEST_CASE("structured parsing is total: serialize -> parse identity over generated schemas") {
    Rng rng(1234);
    for (int i = 0; i < 200; ++i) {
        StructuredSchema schema = random_schema(rng, 0);
        Json value = random_value_for_schema(schema, rng);
        CHECK(schema_validate(schema, value).empty());

        // round-trip through text, as a model reply would arrive
        Json reparsed = Json::parse(value.dump());
        CHECK(schema_validate(schema, reparsed).empty());
        CHECK(reparsed == value);
    }
}

TEST_CASE("schema_validate reports typed violations with paths") {
    StructuredSchema schema{"proposals",
                            {{"apis", SchemaType::list_of(SchemaType::nested(StructuredSchema{
                                          "api", {{"name", SchemaType::string_()}}}))}}};
    auto errors = schema_validate(schema, Json{{"apis", Json::array({Json{{"name", 5}}})}});
    REQUIRE(errors.size() == 1);
    CHECK(errors[0] == "apis[0].name: expected string");
    CHECK(!schema_validate(schema, Json{{"apis", "nope"}}).empty());
}

TEST_CASE("scripted backend keyed on prompt digest returns the canned reply") {
    ChatRequest req{{ChatMessage::user("What is the weather?")}, {}, std::nullopt};
    std::string digest = sha256_hex(render_conversation(req));

    std::vector<ScriptRule> rules;
    ScriptRule rule;
    rule.match = ScriptRule::Match::Digest;
    rule.value = digest;
    rule.reply = "Sunny.";
    rules.push_back(rule);
    ScriptedBackend backend(rules);

    CHECK(backend.complete(req).content == "Sunny.");
    CHECK(backend.complete(req).content == "Sunny.");  // pure function, identical bytes
}

TEST_CASE("scripted rules match in file order and unmatched prompts raise with the digest") {
    auto rules = parse_script(R"([
        {"match": "exact", "value": "[user]\nping\n", "reply": "pong"},
        {"match": "prefix", "value": "[user]\np", "reply": "prefix-hit"},
        {"match": "prefix", "value": "[user]\nz", "reply": "zeta"}
    ])", "inline");
    ScriptedBackend backend(rules);

    CHECK(backend.complete({{ChatMessage::user("ping")}, {}, std::nullopt}).content == "pong");
    CHECK(backend.complete({{ChatMessage::user("pong")}, {}, std::nullopt}).content == "prefix-hit");
    CHECK(backend.complete({{ChatMessage::user("zulu")}, {}, std::nullopt}).content == "zeta");

    ChatRequest miss{{ChatMessage::user("quux")}, {}, std::nullopt};
    std::string digest = sha256_hex(render_conversation(miss));
    try {
        backend.complete(miss);
        FAIL("expected ScriptError");
    } catch (const ScriptError& e) {
        CHECK(std::string(e.what()).find(digest) != std::string::npos);
    }
}

TEST_CASE("load_script reports malformed JSON with a line number and rejects bad rules") {
    TempDir dir;
    write_text_file(dir.file("bad.json"), "[\n{\"match\": \"prefix\",\n}]");
    try {
        load_script(dir.file("bad.json"));
        FAIL("expected ScriptError");
    } catch (const ScriptError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_script(R"([{"match": "fuzzy", "value": "x", "reply": "y"}])", "t"),
                    ScriptError);
    CHECK_THROWS_AS(parse_script(R"([{"match": "exact", "value": "x"}])", "t"), ScriptError);
    CHECK_THROWS_AS(parse_script(R"([{"match": "exact", "value": "x", "reply": "a", "act": "dfs_agent"}])",
                                 "t"),
                    ScriptError);
    CHECK_THROWS_AS(parse_script(R"([{"match": "exact", "value": "x", "act": "no_such_act"}])", "t"),
                    ScriptError);
}

TEST_CASE("scripted determinism across concurrent workers") {
    auto backend = oracle_backend();
    ChatRequest req{{ChatMessage::user(
                        "You are tasked with augmenting an API-use workflow with more APIs\n"
                        "The current workflow:\n{\"chains\":[]}\n\n"
                        "The following is a pool of APIs that you can use:\n"
                        "- alpha: first\n- beta: second\n- gamma: third\n\nNotes:")},
                    {},
                    std::nullopt};

    std::vector<std::string> outputs(8);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 50; ++i) outputs[t] = backend->complete(req).content;
        });
    }
    for (auto& t : threads) t.join();
    for (int t = 1; t < 8; ++t) CHECK(outputs[t] == outputs[0]);
}

TEST_CASE("chat_structured parses a canned proposal list against the schema") {
    LambdaBackend backend([](const ChatRequest&) {
        return BackendReply{R"({"apis": [{"name": "alpha", "instruction": "call it"},
                                          {"name": "beta", "instruction": "then this"}]})",
                            {},
                            1};
    });
    StructuredSchema item{"api", {{"name", SchemaType::string_()}, {"instruction", SchemaType::string_()}}};
    StructuredSchema schema{"proposals", {{"apis", SchemaType::list_of(SchemaType::nested(item))}}};

    CostLedger ledger;
    Json out = chat_structured(backend, {ChatMessage::user("propose")}, schema, ledger, Role::Proposer);
    CHECK(out.at("apis").size() == 2);
    CHECK(ledger.llm(Role::Proposer) == 1);
}

TEST_CASE("chat_structured re-asks once then fails, attributing the role") {
    int calls = 0;
    LambdaBackend backend([&](const ChatRequest&) {
        ++calls;
        return BackendReply{"not json at all", {}, 1};
    });
    StructuredSchema schema{"v", {{"x", SchemaType::integer()}}};
    CostLedger ledger;
    CHECK_THROWS_AS(chat_structured(backend, {ChatMessage::user("go")}, schema, ledger, Role::Selector),
                    SchemaError);
    CHECK(calls == 2);
    CHECK(ledger.llm(Role::Selector) == 2);
}

TEST_CASE("tool_session: single call then report") {
    auto api = make_api("get_weather", "get_weather", "weather lookup");
    LambdaBackend backend([&](const ChatRequest& req) {
        bool has_tool_result = !req.messages.empty() && req.messages.back().role == ChatRole::Tool;
        if (!has_tool_result) {
            return BackendReply{"", {{"c1", {"get_weather", Json{{"city", "Oslo"}}}}}, 1};
        }
        return BackendReply{"done", {}, 1};
    });

    CostLedger ledger;
    auto result = tool_session(
        backend, "sys", "task", {api},
        [](const ToolCallRequest&) { return ToolResponse{CallStatus::Success, Json{{"t", 21}}, 3}; },
        SessionCaps{4, 0}, ledger, Role::Executor, false);

    CHECK(result.history.size() == 1);
    CHECK(result.final_text == "done");
    CHECK(!result.cap_exhausted);
    CHECK(ledger.llm(Role::Executor) == 1);  // session-level accounting
    CHECK(ledger.tool_calls == 1);
}

TEST_CASE("tool_session: failed call retried with changed input succeeds") {
    auto api = make_api("fetch", "fetch", "fetches");
    LambdaBackend model([&](const ChatRequest& req) {
        size_t tool_msgs = 0;
        for (const auto& m : req.messages)
            if (m.role == ChatRole::Tool) ++tool_msgs;
        if (tool_msgs == 0) return BackendReply{"", {{"c1", {"fetch", Json{{"page", 1}}}}}, 1};
        Json last = Json::parse(req.messages.back().content);
        if (last.at("status") == "error" && tool_msgs == 1) {
            return BackendReply{"", {{"c2", {"fetch", Json{{"page", 2}}}}}, 1};
        }
        return BackendReply{R"({"success": true, "successful_step_index": 1})", {}, 1};
    });

    int call_count = 0;
    CostLedger ledger;
    auto result = tool_session(
        model, "sys", "task", {api},
        [&](const ToolCallRequest&) {
            ++call_count;
            return call_count == 1 ? ToolResponse{CallStatus::Error, Json{{"e", "bad"}}, 2}
                                   : ToolResponse{CallStatus::Success, Json{{"ok", 1}}, 2};
        },
        SessionCaps{4, 0}, ledger, Role::Executor, false);

    REQUIRE(result.history.size() == 2);
    CHECK(result.history[0].response.status == CallStatus::Error);
    CHECK(result.history[1].response.status == CallStatus::Success);
    CHECK(result.history[1].step_index == 1);
}

TEST_CASE("tool_session: looping model hits the tool-call cap with the flag set") {
    auto api = make_api("spin", "spin", "spins");
    LambdaBackend model([&](const ChatRequest&) {
        return BackendReply{"", {{"x", {"spin", Json::object()}}}, 1};
    });
    CostLedger ledger;
    auto result = tool_session(
        model, "sys", "task", {api},
        [](const ToolCallRequest&) { return ToolResponse{CallStatus::Success, Json{}, 1}; },
        SessionCaps{4, 0}, ledger, Role::Executor, false);

    CHECK(result.history.size() == 4);
    CHECK(result.cap_exhausted);
    CHECK(result.final_text.empty());
    CHECK(ledger.tool_calls == 4);
}

TEST_CASE("tool_session: per-turn accounting counts every model turn") {
    auto api = make_api("a", "a", "a");
    LambdaBackend model([&](const ChatRequest& req) {
        size_t tool_msgs = 0;
        for (const auto& m : req.messages)
            if (m.role == ChatRole::Tool) ++tool_msgs;
        if (tool_msgs < 3) return BackendReply{"", {{"c", {"a", Json{{"i", tool_msgs}}}}}, 1};
        return BackendReply{"final answer", {}, 1};
    });
    CostLedger ledger;
    auto result = tool_session(
        model, "sys", "task", {api},
        [](const ToolCallRequest&) { return ToolResponse{CallStatus::Success, Json{}, 1}; },
        SessionCaps{100, 10}, ledger, Role::Agent, true);
    CHECK(result.history.size() == 3);
    CHECK(ledger.llm(Role::Agent) == 4);
}

TEST_CASE("http backend: two transport failures then success counts three attempts") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int n = ++hits;
        if (n <= 2) {
            res.status = 503;
            res.set_content("overloaded", "text/plain");
            return;
        }
        Json reply{{"choices",
                    Json::array({Json{{"message", Json{{"role", "assistant"}, {"content", "hello"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::Http;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    cfg.retry_backoff_ms = 5;
    cfg.request_timeout_ms = 5000;
    HttpBackend backend(cfg);

    CostLedger ledger;
    std::string out = chat_text(backend, {ChatMessage::user("hi")}, ledger, Role::Writer);
    CHECK(out == "hello");
    CHECK(ledger.llm(Role::Writer) == 3);
    CHECK(hits == 3);

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend round-trips tool calls over the openai-compatible wire") {
    httplib::Server server;
    Json seen_body;
    server.Post("/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = Json::parse(req.body);
        Json function;
        function["name"] = "get_weather";
        function["arguments"] = "{\"city\":\"Oslo\"}";
        Json tool_call;
        tool_call["id"] = "call_9";
        tool_call["type"] = "function";
        tool_call["function"] = function;
        Json message;
        message["role"] = "assistant";
        message["content"] = Json();
        message["tool_calls"] = Json::array({tool_call});
        Json reply;
        reply["choices"] = Json::array({Json{{"message", message}}});
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::Http;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    HttpBackend backend(cfg);

    ChatRequest req{{ChatMessage::system("be helpful"), ChatMessage::user("weather in oslo?")},
                    {make_api("get_weather", "get_weather", "weather lookup")},
                    std::nullopt};
    BackendReply reply = backend.complete(req);

    REQUIRE(reply.tool_calls.size() == 1);
    CHECK(reply.tool_calls[0].id == "call_9");
    CHECK(reply.tool_calls[0].call.api_id == "get_weather");
    CHECK(reply.tool_calls[0].call.arguments.at("city") == "Oslo");
    CHECK(seen_body.at("tools").size() == 1);
    CHECK(seen_body.at("tools").at(0).at("function").at("name") == "get_weather");
    CHECK(seen_body.at("messages").size() == 2);

    server.stop();
    server_thread.join();
}
