#include "toolweave/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace toolweave {

std::string to_string(ChatRole r) {
    switch (r) {
        case ChatRole::System: return "system";
        case ChatRole::User: return "user";
        case ChatRole::Assistant: return "assistant";
        case ChatRole::Tool: return "tool";
    }
    return "user";
}

ChatMessage ChatMessage::system(std::string text) { return ChatMessage{ChatRole::System, std::move(text), {}, {}}; }
ChatMessage ChatMessage::user(std::string text) { return ChatMessage{ChatRole::User, std::move(text), {}, {}}; }
ChatMessage ChatMessage::assistant(std::string text) { return ChatMessage{ChatRole::Assistant, std::move(text), {}, {}}; }

ChatMessage ChatMessage::assistant_calls(std::string text, std::vector<ChatToolCall> calls) {
    return ChatMessage{ChatRole::Assistant, std::move(text), std::move(calls), {}};
}

ChatMessage ChatMessage::tool_result(std::string call_id, std::string text) {
    return ChatMessage{ChatRole::Tool, std::move(text), {}, std::move(call_id)};
}

std::string render_conversation(const ChatRequest& request) {
    std::string out;
    for (const auto& m : request.messages) {
        if (m.role == ChatRole::Tool) {
            out += "[tool id=" + m.tool_call_id + "]\n" + m.content + "\n";
            continue;
        }
        out += "[" + to_string(m.role) + "]\n" + m.content + "\n";
        for (const auto& tc : m.tool_calls) {
            out += "[tool_call id=" + tc.id + " api=" + tc.call.api_id + " args=" +
                   tc.call.arguments.dump() + "]\n";
        }
    }
    return out;
}

BackendConfig BackendConfig::from_json(const Json& j) {
    BackendConfig c;
    std::string kind = j.value("kind", std::string{"scripted"});
    if (kind == "http") c.kind = Kind::Http;
    else if (kind == "scripted") c.kind = Kind::Scripted;
    else throw std::invalid_argument("unknown backend kind: " + kind);
    c.base_url = j.value("base_url", std::string{});
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    c.request_timeout_ms = j.value("request_timeout_ms", c.request_timeout_ms);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.retry_backoff_ms = j.value("retry_backoff_ms", c.retry_backoff_ms);
    c.script_path = j.value("script_path", std::string{});
    if (c.kind == Kind::Http && c.base_url.empty()) {
        throw std::invalid_argument("http backend requires base_url");
    }
    return c;
}

Json BackendConfig::to_json() const {
    Json j;
    j["kind"] = kind == Kind::Http ? "http" : "scripted";
    if (!base_url.empty()) j["base_url"] = base_url;
    j["model"] = model;
    j["api_key_env"] = api_key_env;
    j["temperature"] = temperature;
    j["max_output_tokens"] = max_output_tokens;
    j["request_timeout_ms"] = request_timeout_ms;
    j["max_retries"] = max_retries;
    j["retry_backoff_ms"] = retry_backoff_ms;
    if (!script_path.empty()) j["script_path"] = script_path;
    return j;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    if (config.kind == BackendConfig::Kind::Http) return std::make_unique<HttpBackend>(config);
    if (config.script_path.empty()) throw std::invalid_argument("scripted backend requires script_path");
    return load_script(config.script_path);
}

// --- scripted backend -----------------------------------------------------------

namespace {

std::string make_call_id(const ChatRequest& request, size_t k) {
    return "call_" + std::to_string(request.messages.size()) + "_" + std::to_string(k);
}

// Bullet entries ("- name: description") following a marker line, up to the
// first non-bullet line. Returns the names.
std::vector<std::string> bullet_names_after(const std::string& text, const std::string& marker) {
    std::vector<std::string> names;
    size_t pos = text.find(marker);
    if (pos == std::string::npos) return names;
    pos = text.find('\n', pos);
    if (pos == std::string::npos) return names;
    ++pos;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        if (line.rfind("- ", 0) != 0) break;
        std::string entry = line.substr(2);
        size_t colon = entry.find(": ");
        names.push_back(colon == std::string::npos ? trim(entry) : trim(entry.substr(0, colon)));
        pos = eol + 1;
    }
    return names;
}

Json json_after_marker(const std::string& text, const std::string& marker) {
    size_t pos = text.find(marker);
    if (pos == std::string::npos) return Json();
    std::string blob = extract_balanced_json(text, pos + marker.size());
    if (blob.empty()) return Json();
    return Json::parse(blob, nullptr, false);
}

size_t count_tool_messages(const ChatRequest& request) {
    size_t n = 0;
    for (const auto& m : request.messages)
        if (m.role == ChatRole::Tool) ++n;
    return n;
}

const ChatMessage* last_message(const ChatRequest& request) {
    return request.messages.empty() ? nullptr : &request.messages.back();
}

std::optional<CallStatus> last_tool_status(const ChatRequest& request) {
    const ChatMessage* m = last_message(request);
    if (!m || m->role != ChatRole::Tool) return std::nullopt;
    Json j = Json::parse(m->content, nullptr, false);
    if (j.is_discarded() || !j.contains("status")) return CallStatus::Error;
    return call_status_from_string(j.at("status").get<std::string>());
}

BackendReply reply_text(std::string s) { return BackendReply{std::move(s), {}, 1}; }
BackendReply reply_value(const Json& j) { return BackendReply{j.dump(), {}, 1}; }

BackendReply act_propose_from_pool(const Json& params, const std::string& rendered) {
    std::string marker = params.value("marker", std::string{"pool of APIs that you can use:"});
    auto names = bullet_names_after(rendered, marker);
    int count = params.value("count", 3);
    if (params.value("vary", false) && count > 1) {
        count = 1 + static_cast<int>(fnv1a64(rendered) % static_cast<uint64_t>(count));
    }
    Json apis = Json::array();
    for (const auto& name : names) {
        if (static_cast<int>(apis.size()) >= count) break;
        apis.push_back({{"name", name}, {"instruction", "Call " + name + " with representative arguments."}});
    }
    return reply_value(Json{{"apis", apis}});
}

BackendReply act_explore_tool(const ChatRequest& request, const Json& params) {
    if (request.tools.empty()) {
        return reply_value(Json{{"success", false}, {"justification", "no tool offered"}});
    }
    size_t steps = count_tool_messages(request);
    auto status = last_tool_status(request);
    if (!status) {
        Json args = params.value("arguments", Json::object());
        return BackendReply{"", {{make_call_id(request, 0), {request.tools.front().id, args}}}, 1};
    }
    if (*status == CallStatus::Success) {
        return reply_value(Json{{"success", true},
                                {"justification", "call returned the expected result"},
                                {"successful_step_index", steps - 1}});
    }
    if (steps == 1) {
        Json retry = params.value("retry_arguments", Json{{"retry", 1}});
        return BackendReply{"", {{make_call_id(request, 0), {request.tools.front().id, retry}}}, 1};
    }
    return reply_value(Json{{"success", false}, {"justification", "api kept failing after a changed input"}});
}

BackendReply act_select_first_success(const Json& params, const std::string& rendered) {
    Json chain = params.value("chain", Json("new"));
    Json out{{"decision", "pick"}, {"report_index", 0}};
    if (chain.is_string() && chain.get<std::string>() == "auto") {
        Json wf = json_after_marker(rendered, "The current api-use workflow:");
        size_t chains = (wf.is_object() && wf.contains("chains")) ? wf.at("chains").size() : 0;
        uint64_t h = fnv1a64(rendered);
        size_t pick = static_cast<size_t>(h % (chains + 1));
        if (pick == chains) out["chain"] = "new";
        else out["chain_index"] = pick;
    } else if (chain.is_number()) {
        out["chain_index"] = chain;
    } else {
        out["chain"] = chain;
    }
    return reply_value(out);
}

BackendReply act_inverse_summarize(const ChatRequest&, const std::string& rendered) {
    Json wf = json_after_marker(rendered, "API usage chains:");
    std::vector<std::string> apis;
    if (wf.is_object() && wf.contains("chains")) {
        for (const auto& chain : wf.at("chains")) {
            for (const auto& step : chain.value("steps", Json::array())) {
                apis.push_back(step.at("request").at("api_id").get<std::string>());
            }
        }
    }
    std::string joined;
    for (size_t i = 0; i < apis.size(); ++i) joined += (i ? ", " : "") + apis[i];
    std::string token = hex8(fnv1a64(wf.is_null() ? rendered : wf.dump()));
    return reply_value(Json{
        {"query", "Please run the following services for me: " + joined + " (request " + token + ")"},
        {"response", "All requested services completed: " + joined + ". Reference " + token + "."}});
}

BackendReply act_filter_verdict(const ChatRequest&, const Json& params, const std::string& rendered) {
    Json spec = json_after_marker(rendered, "API entry:");
    std::string name = spec.is_object() ? spec.value("name", std::string{}) : std::string{};
    bool keep = true;
    std::string why = "documented API";
    for (const auto& pat : params.value("reject_substrings", std::vector<std::string>{})) {
        if (name.find(pat) != std::string::npos) {
            keep = false;
            why = "name matches rejected pattern '" + pat + "'";
            break;
        }
    }
    return reply_value(Json{{"keep", keep}, {"reason", why}});
}

BackendReply act_judge_fixed(const Json& params) {
    int total = params.value("tasks_total", 1);
    std::vector<double> scores = params.value("scores", std::vector<double>{100.0});
    double sum = 0;
    for (double s : scores) sum += s;
    int denom = std::max<int>(total, static_cast<int>(scores.size()));
    Json out{{"tasks_total", total}, {"per_task_scores", scores}, {"final", denom ? sum / denom : 0.0}};
    return reply_value(out);
}

BackendReply act_write_summary(const std::string& rendered) {
    Json trace = json_after_marker(rendered, "Tool use trace:");
    size_t n = trace.is_array() ? trace.size() : 0;
    return reply_text("Here is what I found across " + std::to_string(n) + " tool result(s). Reference " +
                      hex8(fnv1a64(rendered)) + ".");
}

BackendReply act_query_from_pool(const ChatRequest&, const Json& params, const std::string& rendered) {
    std::string marker = params.value("marker", std::string{"Available APIs:"});
    auto names = bullet_names_after(rendered, marker);
    std::string joined;
    for (size_t i = 0; i < names.size(); ++i) joined += (i ? ", " : "") + names[i];
    return reply_value(Json{{"query", "I need results from these services: " + joined + "."}});
}

BackendReply act_call_tools(const ChatRequest& request, const Json& params) {
    Json which = params.value("which", Json("all"));
    Json args = params.value("arguments", Json::object());
    std::vector<ChatToolCall> calls;
    auto add = [&](const std::string& id, size_t k) { calls.push_back({make_call_id(request, k), {id, args}}); };
    if (which.is_string() && which.get<std::string>() == "all") {
        for (size_t k = 0; k < request.tools.size(); ++k) add(request.tools[k].id, k);
    } else if (which.is_string() && which.get<std::string>() == "none") {
        return reply_text("No tools needed.");
    } else if (which.is_array()) {
        size_t k = 0;
        for (const auto& id : which) {
            for (const auto& t : request.tools) {
                if (t.id == id.get<std::string>()) add(t.id, k++);
            }
        }
    }
    if (calls.empty()) return reply_text("No tools matched.");
    return BackendReply{"", std::move(calls), 1};
}

BackendReply act_react_steps(const ChatRequest& request, const Json& params) {
    size_t want = params.value("calls", 1);
    std::string answer = params.value("answer", std::string{"Task complete."});
    size_t done = count_tool_messages(request);
    if (done >= want || request.tools.empty()) return reply_text(answer);
    Json args = params.value("arguments", Json::object());
    const auto& tool = request.tools[done % request.tools.size()];
    return BackendReply{"", {{make_call_id(request, 0), {tool.id, args}}}, 1};
}

BackendReply act_dfs_agent(const ChatRequest& request, const Json& params, const std::string& rendered) {
    auto status = last_tool_status(request);
    if (status && *status == CallStatus::Success) {
        return reply_text("Done. The task succeeded (trace " + hex8(fnv1a64(rendered)) + ").");
    }
    std::set<std::string> tried;
    for (const auto& m : request.messages) {
        for (const auto& tc : m.tool_calls) tried.insert(tc.call.api_id);
    }
    Json args = params.value("arguments", Json::object());
    for (const auto& t : request.tools) {
        if (!tried.count(t.id)) {
            return BackendReply{"", {{make_call_id(request, 0), {t.id, args}}}, 1};
        }
    }
    return reply_text("DEAD END: every available tool failed.");
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules, std::string identity)
    : rules_(std::move(rules)), identity_(std::move(identity)) {}

BackendReply ScriptedBackend::complete(const ChatRequest& request) {
    const std::string rendered = render_conversation(request);
    const std::string digest = sha256_hex(rendered);

    for (const auto& rule : rules_) {
        bool hit = false;
        switch (rule.match) {
            case ScriptRule::Match::Exact: hit = rendered == rule.value; break;
            case ScriptRule::Match::Prefix: hit = rendered.rfind(rule.value, 0) == 0; break;
            case ScriptRule::Match::Digest: hit = digest == rule.value; break;
        }
        if (!hit) continue;

        if (rule.reply) return reply_text(*rule.reply);
        if (rule.reply_json) return reply_value(*rule.reply_json);
        if (rule.tool_calls) {
            std::vector<ChatToolCall> calls;
            for (size_t k = 0; k < rule.tool_calls->size(); ++k) {
                auto call = (*rule.tool_calls)[k];
                if (call.api_id == "$first" && !request.tools.empty()) call.api_id = request.tools.front().id;
                calls.push_back({make_call_id(request, k), std::move(call)});
            }
            return BackendReply{"", std::move(calls), 1};
        }
        const std::string& act = *rule.act;
        if (act == "propose_from_pool") return act_propose_from_pool(rule.params, rendered);
        if (act == "explore_tool") return act_explore_tool(request, rule.params);
        if (act == "select_first_success") return act_select_first_success(rule.params, rendered);
        if (act == "inverse_summarize") return act_inverse_summarize(request, rendered);
        if (act == "filter_verdict") return act_filter_verdict(request, rule.params, rendered);
        if (act == "judge_fixed") return act_judge_fixed(rule.params);
        if (act == "write_summary") return act_write_summary(rendered);
        if (act == "query_from_pool") return act_query_from_pool(request, rule.params, rendered);
        if (act == "call_tools") return act_call_tools(request, rule.params);
        if (act == "react_steps") return act_react_steps(request, rule.params);
        if (act == "dfs_agent") return act_dfs_agent(request, rule.params, rendered);
        throw ScriptError("unknown act directive: " + act);
    }

    throw ScriptError("no script rule matched prompt; digest=" + digest +
                      " head=" + rendered.substr(0, std::min<size_t>(rendered.size(), 120)));
}

namespace {

const std::set<std::string> kKnownActs = {
    "propose_from_pool", "explore_tool",  "select_first_success", "inverse_summarize",
    "filter_verdict",    "judge_fixed",   "write_summary",        "query_from_pool",
    "call_tools",        "react_steps",   "dfs_agent"};

size_t line_of_offset(const std::string& text, size_t byte) {
    size_t line = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

}  // namespace

std::vector<ScriptRule> parse_script(const std::string& text, const std::string& origin) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ScriptError(origin + ": malformed script at line " +
                          std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }
    if (!doc.is_array()) throw ScriptError(origin + ": script must be a JSON array of rules");

    std::vector<ScriptRule> rules;
    for (size_t i = 0; i < doc.size(); ++i) {
        const Json& rj = doc[i];
        auto fail = [&](const std::string& why) {
            throw ScriptError(origin + ": rule " + std::to_string(i) + ": " + why);
        };
        if (!rj.is_object()) fail("rule must be an object");

        ScriptRule rule;
        std::string match = rj.value("match", std::string{"prefix"});
        if (match == "exact") rule.match = ScriptRule::Match::Exact;
        else if (match == "prefix") rule.match = ScriptRule::Match::Prefix;
        else if (match == "digest") rule.match = ScriptRule::Match::Digest;
        else fail("unknown match kind '" + match + "'");
        if (!rj.contains("value") || !rj.at("value").is_string()) fail("missing string 'value'");
        rule.value = rj.at("value").get<std::string>();

        int actions = 0;
        if (rj.contains("reply")) {
            rule.reply = rj.at("reply").get<std::string>();
            ++actions;
        }
        if (rj.contains("reply_json")) {
            rule.reply_json = rj.at("reply_json");
            ++actions;
        }
        if (rj.contains("tool_call") || rj.contains("tool_calls")) {
            std::vector<ToolCallRequest> calls;
            Json arr = rj.contains("tool_calls") ? rj.at("tool_calls") : Json::array({rj.at("tool_call")});
            for (const auto& cj : arr) {
                ToolCallRequest c;
                c.api_id = cj.value("api", std::string{"$first"});
                c.arguments = cj.value("arguments", Json::object());
                calls.push_back(std::move(c));
            }
            rule.tool_calls = std::move(calls);
            ++actions;
        }
        if (rj.contains("act")) {
            rule.act = rj.at("act").get<std::string>();
            if (!kKnownActs.count(*rule.act)) fail("unknown act '" + *rule.act + "'");
            rule.params = rj.value("params", Json::object());
            ++actions;
        }
        if (actions != 1) fail("rule must carry exactly one of reply/reply_json/tool_call(s)/act");
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::unique_ptr<ScriptedBackend> load_script(const std::string& path) {
    std::string text = read_text_file(path);
    auto rules = parse_script(text, path);
    return std::make_unique<ScriptedBackend>(std::move(rules),
                                             "scripted:" + sha256_hex(text).substr(0, 12));
}

// --- HTTP backend -----------------------------------------------------------------

namespace {

// scheme://host[:port][/prefix] -> (origin, prefix)
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    size_t scheme = base_url.find("://");
    size_t path_start = scheme == std::string::npos ? base_url.find('/')
                                                    : base_url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

Json message_to_wire(const ChatMessage& m) {
    Json j;
    j["role"] = to_string(m.role);
    if (m.role == ChatRole::Tool) {
        j["tool_call_id"] = m.tool_call_id;
        j["content"] = m.content;
        return j;
    }
    if (!m.tool_calls.empty()) {
        Json calls = Json::array();
        for (const auto& tc : m.tool_calls) {
            calls.push_back({{"id", tc.id},
                             {"type", "function"},
                             {"function",
                              {{"name", tc.call.api_id}, {"arguments", tc.call.arguments.dump()}}}});
        }
        j["tool_calls"] = calls;
        j["content"] = m.content.empty() ? Json() : Json(m.content);
        return j;
    }
    j["content"] = m.content;
    return j;
}

Json param_schema(const ApiSpec& api) {
    Json props = Json::object();
    std::vector<std::string> required;
    for (const auto& p : api.params) {
        props[p.name] = Json{{"type", to_string(p.kind)}, {"description", p.description}};
        if (p.required) required.push_back(p.name);
    }
    return Json{{"type", "object"}, {"properties", props}, {"required", required}};
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw GatewayError("http backend requires base_url");
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpBackend::identity() const {
    return "http:" + config_.base_url + " model=" + config_.model;
}

BackendReply HttpBackend::complete(const ChatRequest& request) {
    Json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_output_tokens;

    Json messages = Json::array();
    for (const auto& m : request.messages) messages.push_back(message_to_wire(m));
    if (request.response_schema) {
        messages.push_back({{"role", "system"},
                            {"content", "Respond with ONLY a JSON object matching the schema named '" +
                                            request.response_schema->first + "'."}});
        body["response_format"] = Json{{"type", "json_schema"},
                                       {"json_schema",
                                        {{"name", request.response_schema->first},
                                         {"schema", request.response_schema->second},
                                         {"strict", false}}}};
    }
    body["messages"] = messages;

    if (!request.tools.empty()) {
        Json tools = Json::array();
        for (const auto& t : request.tools) {
            tools.push_back({{"type", "function"},
                             {"function",
                              {{"name", t.id},
                               {"description", t.name + ": " + t.description},
                               {"parameters", param_schema(t)}}}});
        }
        body["tools"] = tools;
    }

    auto [origin, prefix] = split_base_url(config_.base_url);
    std::string payload = body.dump();
    std::string last_error;

    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.retry_backoff_ms * (1 << (attempt - 1))));
        }

        httplib::Client client(origin);
        client.set_connection_timeout(0, config_.request_timeout_ms * 1000LL);
        client.set_read_timeout(config_.request_timeout_ms / 1000, (config_.request_timeout_ms % 1000) * 1000);
        client.set_write_timeout(config_.request_timeout_ms / 1000, (config_.request_timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(prefix + "/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "server status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw GatewayError("chat completion failed with status " + std::to_string(res->status) +
                               ": " + res->body.substr(0, 200));
        }

        Json doc = Json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc.at("choices").empty()) {
            throw GatewayError("malformed chat completion response: " + res->body.substr(0, 200));
        }
        const Json& msg = doc.at("choices").at(0).at("message");

        BackendReply reply;
        reply.attempts = attempt + 1;
        if (msg.contains("content") && msg.at("content").is_string()) {
            reply.content = msg.at("content").get<std::string>();
        }
        if (msg.contains("tool_calls")) {
            for (const auto& tc : msg.at("tool_calls")) {
                ChatToolCall call;
                call.id = tc.value("id", std::string{});
                call.call.api_id = tc.at("function").at("name").get<std::string>();
                std::string args = tc.at("function").value("arguments", std::string{"{}"});
                Json parsed = Json::parse(args, nullptr, false);
                call.call.arguments = parsed.is_discarded() ? Json{{"_raw", args}} : parsed;
                reply.tool_calls.push_back(std::move(call));
            }
        }
        return reply;
    }

    throw GatewayError("chat completion failed after " + std::to_string(config_.max_retries + 1) +
                       " attempts: " + last_error);
}

// --- gateway operations ---------------------------------------------------------------

std::string chat_text(Backend& backend, const std::vector<ChatMessage>& messages,
                      CostLedger& ledger, Role role) {
    BackendReply reply = backend.complete(ChatRequest{messages, {}, std::nullopt});
    ledger.add_llm(role, reply.attempts);
    return reply.content;
}

namespace {

std::optional<Json> try_parse_structured(const StructuredSchema& schema, const std::string& content,
                                         std::vector<std::string>& errors_out) {
    std::string text = strip_code_fences(content);
    Json parsed = Json::parse(text, nullptr, false);
    if (parsed.is_discarded()) {
        // Models sometimes wrap JSON in prose; salvage the first balanced blob.
        std::string blob = extract_balanced_json(text, 0);
        if (!blob.empty()) parsed = Json::parse(blob, nullptr, false);
        if (parsed.is_discarded()) {
            errors_out.push_back("reply is not valid JSON");
            return std::nullopt;
        }
    }
    auto errors = schema_validate(schema, parsed);
    if (!errors.empty()) {
        errors_out.insert(errors_out.end(), errors.begin(), errors.end());
        return std::nullopt;
    }
    return parsed;
}

}  // namespace

Json chat_structured(Backend& backend, const std::vector<ChatMessage>& messages,
                     const StructuredSchema& schema, CostLedger& ledger, Role role, bool none_ok) {
    ChatRequest req{messages, {}, std::make_pair(schema.name, schema_to_json_schema(schema))};
    BackendReply reply = backend.complete(req);
    ledger.add_llm(role, reply.attempts);

    if (none_ok && to_lower(trim(reply.content)) == "none") return Json();

    std::vector<std::string> errors;
    if (auto parsed = try_parse_structured(schema, reply.content, errors)) return *parsed;

    // One bounded re-ask with the violations spelled out.
    std::string complaint;
    for (const auto& e : errors) complaint += (complaint.empty() ? "" : "; ") + e;
    ChatRequest retry = req;
    retry.messages.push_back(ChatMessage::assistant(reply.content));
    retry.messages.push_back(ChatMessage::user("Your previous reply did not match the required structure (" +
                                               complaint + ").\n" + schema_instructions(schema)));
    BackendReply second = backend.complete(retry);
    ledger.add_llm(role, second.attempts);

    if (none_ok && to_lower(trim(second.content)) == "none") return Json();
    errors.clear();
    if (auto parsed = try_parse_structured(schema, second.content, errors)) return *parsed;

    std::string detail;
    for (const auto& e : errors) detail += (detail.empty() ? "" : "; ") + e;
    throw SchemaError("structured reply for role '" + to_string(role) + "' failed schema '" +
                      schema.name + "' after re-ask: " + detail);
}

SessionResult tool_session(Backend& backend, const std::string& system_text,
                           const std::string& task_text, const std::vector<ApiSpec>& tools,
                           const ToolExecutor& execute, SessionCaps caps, CostLedger& ledger,
                           Role role, bool count_per_turn) {
    if (tools.empty()) throw GatewayError("tool_session requires at least one tool");
    if (caps.max_tool_calls < 1) throw GatewayError("tool_session requires max_tool_calls >= 1");

    SessionResult result;
    std::vector<ChatMessage> messages{ChatMessage::system(system_text), ChatMessage::user(task_text)};
    if (!count_per_turn) ledger.add_llm(role, 1);

    int llm_turns = 0;
    for (;;) {
        if (caps.max_llm_turns > 0 && llm_turns >= caps.max_llm_turns) {
            result.cap_exhausted = true;
            break;
        }
        BackendReply reply = backend.complete(ChatRequest{messages, tools, std::nullopt});
        ++llm_turns;
        if (count_per_turn) ledger.add_llm(role, reply.attempts);

        if (reply.tool_calls.empty()) {
            result.final_text = reply.content;
            break;
        }

        messages.push_back(ChatMessage::assistant_calls(reply.content, reply.tool_calls));
        bool capped = false;
        for (const auto& tc : reply.tool_calls) {
            if (static_cast<int>(result.history.size()) >= caps.max_tool_calls) {
                capped = true;
                break;
            }
            ToolResponse response = execute(tc.call);
            ledger.tool_calls += 1;
            ExecutionStep step{tc.call, response, result.history.size()};
            messages.push_back(ChatMessage::tool_result(tc.id, response.to_json().dump()));
            result.history.push_back(std::move(step));
        }
        if (capped) {
            result.cap_exhausted = true;
            break;
        }
    }
    return result;
}

}  // namespace toolweave
