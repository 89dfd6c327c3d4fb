#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolweave/model.hpp"
#include "toolweave/schema.hpp"

namespace toolweave {

// --- errors -------------------------------------------------------------------

struct GatewayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ScriptError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- chat messages --------------------------------------------------------------

enum class ChatRole { System, User, Assistant, Tool };

std::string to_string(ChatRole r);

struct ChatToolCall {
    std::string id;
    ToolCallRequest call;
};

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;
    std::vector<ChatToolCall> tool_calls;
    std::string tool_call_id;  // role=tool only

    static ChatMessage system(std::string text);
    static ChatMessage user(std::string text);
    static ChatMessage assistant(std::string text);
    static ChatMessage assistant_calls(std::string text, std::vector<ChatToolCall> calls);
    static ChatMessage tool_result(std::string call_id, std::string text);
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::vector<ApiSpec> tools;
    // When set, backends may enforce structured output (name, json schema).
    std::optional<std::pair<std::string, Json>> response_schema;
};

struct BackendReply {
    std::string content;
    std::vector<ChatToolCall> tool_calls;
    int attempts = 1;  // transport attempts consumed, for cost accounting
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendReply complete(const ChatRequest& request) = 0;
    virtual std::string identity() const = 0;
};

// Canonical text form of a conversation; scripted rules match against this
// and digests are computed over it.
std::string render_conversation(const ChatRequest& request);

// --- backend config ---------------------------------------------------------------

struct BackendConfig {
    enum class Kind { Http, Scripted };

    Kind kind = Kind::Scripted;
    std::string base_url;  // required for http
    std::string model = "gpt-4.1-mini";
    std::string api_key_env = "LLM_API_KEY";
    double temperature = 0.0;
    int max_output_tokens = 2048;
    int request_timeout_ms = 60000;
    int max_retries = 2;
    int retry_backoff_ms = 250;
    std::string script_path;  // required for scripted

    static BackendConfig from_json(const Json& j);
    Json to_json() const;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

// --- scripted backend ----------------------------------------------------------------

// Rules are matched in file order against render_conversation(); the first
// match answers. A rule carries exactly one action: a canned reply, canned
// tool call(s), or a deterministic behavior directive ("act"). Directives are
// pure functions of the request, so the backend stays replayable and safe for
// concurrent use.
struct ScriptRule {
    enum class Match { Exact, Prefix, Digest };

    Match match = Match::Prefix;
    std::string value;

    std::optional<std::string> reply;
    std::optional<Json> reply_json;
    std::optional<std::vector<ToolCallRequest>> tool_calls;
    std::optional<std::string> act;
    Json params = Json::object();
};

class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptRule> rules, std::string identity = "scripted");

    BackendReply complete(const ChatRequest& request) override;
    std::string identity() const override { return identity_; }

private:
    std::vector<ScriptRule> rules_;
    std::string identity_;
};

// Parses a script file (JSON list of rules). Malformed input raises
// ScriptError with the line number.
std::unique_ptr<ScriptedBackend> load_script(const std::string& path);
std::vector<ScriptRule> parse_script(const std::string& text, const std::string& origin);

// --- HTTP backend ------------------------------------------------------------------

// OpenAI-compatible chat-completions client. Transport failures are retried
// with exponential backoff; every attempt is reported for cost accounting.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config);

    BackendReply complete(const ChatRequest& request) override;
    std::string identity() const override;

private:
    BackendConfig config_;
    std::string api_key_;
};

// --- gateway operations ---------------------------------------------------------------

std::string chat_text(Backend& backend, const std::vector<ChatMessage>& messages,
                      CostLedger& ledger, Role role);

// Structured call with one bounded re-ask on schema violations. A bare "None"
// reply maps to null when none_ok is set.
Json chat_structured(Backend& backend, const std::vector<ChatMessage>& messages,
                     const StructuredSchema& schema, CostLedger& ledger, Role role,
                     bool none_ok = false);

struct SessionCaps {
    int max_tool_calls = 4;
    int max_llm_turns = 0;  // 0 = unlimited
};

struct SessionResult {
    std::vector<ExecutionStep> history;
    std::string final_text;
    bool cap_exhausted = false;
};

using ToolExecutor = std::function<ToolResponse(const ToolCallRequest&)>;

// Alternates model turns and tool executions until the model emits plain text
// or a cap is hit. count_per_turn selects the accounting mode: per model turn
// (inference agents) or once per session (generation executors, which the
// budget model counts as single module invocations).
SessionResult tool_session(Backend& backend, const std::string& system_text,
                           const std::string& task_text, const std::vector<ApiSpec>& tools,
                           const ToolExecutor& execute, SessionCaps caps, CostLedger& ledger,
                           Role role, bool count_per_turn);

}  // namespace toolweave
