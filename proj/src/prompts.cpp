#include "toolweave/prompts.hpp"

#include <filesystem>
#include <stdexcept>

#include "toolweave/util.hpp"

namespace toolweave {

namespace {

const char* kProposer = R"(You are tasked with augmenting an API-use workflow with more APIs from a given library so that it can serve for more advanced tasks.
Given the following information that provides the context, please make three API-use proposals to augment the current workflow.

The current workflow:
{workflow_cur}

The following is a pool of APIs that you can use:
{api_all}

Notes:
- Please reply in the required data structure.
- To select an API, you should return its name.
- If you do not have any additional tools to propose, you can respond with None.
)";

const char* kExecutor = R"(You are tasked with exploring an API based on a given plan.
The following shows a guide for you to follow:
1. verify whether the API-calling result follows the plan.
2. report `success = False`, if you fail to get the expected result, and explain why.
3. report `success = True`, if you get the expected result, and provide justification for the success.
4. if you report `success = True`, you should also report which function calling step leads to the success.


Chances are that the API may return bad results or fail to execute in one attempt.
In such cases, you should do another try by changing the input.
If it still fails, you should report `success = False`.

The following is the plan:
{plan}

Notes:
- If you consider the API execution provides a reasonable result of a given plan, you should report `success = True`.
- If an API fails to execute, you should report `success = False`.
)";

const char* kSelector = R"(You are an API selector.

You need to select one API or refuse to select any API from the given list of APIs to augument the current workflow.

The current api-use workflow:
{workflow_cur}

Reports from the proposed APIs:
{api_reports}

When you select an api, you need to make the following decisions:
1. whether any API can be used to augment the current workflow.
2. if yes, select one API to augment the current workflow.
3. decide whether you want to append the selected API to a api-use chain or create a new api-use chain with this API.
    3.1 When the `tool_input` value in `ToolAgentAction` of this API is dependent on any API execution `response` in an api-use chain, choose the append operation. Examples include the `tool_input` reuse any information in the `response`. When you decide to append, you should also select which api-use chain you want to append the selected API to.
    3.2 If the `tool_input` value in `ToolAgentAction` is not dependent of any API execution `response` in any api-use chain of the current workflow, you should create a new api-use chain with this API. For example, if the `tool_input` is empty, you should always choose to create a new api-use chain.
)";

const char* kInverse = R"(Given the following API usage chains: {api_use_chains}, your task is to:

1. *Infer the user query* that would have triggered all the API-calling events. The query should be sufficiently detailed to ensure an LLM can trigger all API calls in the provided chains.
2. *Predict the agent's response* to the user after executing all API calls in the workflow. The response should reflect the results of the executed APIs in a natural and informative way.
Notes:
- The inferred user query must be comprehensive enough to guide the LLM in generating all API calls (including the input and the selection of api/tool name) across the given API-use chains.
- Ensure that the agent's response accurately summarizes or presents the results of the API executions.
)";

const char* kJudge = R"(Task Overview:
You are tasked with evaluating the quality of a response to a user query. The response is ground on a tool use trace, which is a list of (api_use_request, api_response) tuples.
Your evaluation should produce a score between 0 and 100, based on how well the response addresses each aspect of the user query compared to the provided ground truth response.


Evaluation Criteria:
1. Coverage of Requests:
- User Requests Count: Identify the number of distinct requests or tasks contained in the user query.
- Response Count: Determine how many of these requests the response addresses.
- If a request is not addressed at all, that aspect should receive a score of 0.
2. Quality of Each Response:
- For each request/task that the request addresses, rate the quality of the response on a scale from 0 to 100.
- If all API calls related to the request are failed, then the score is 0.
- If there is successful API call related to the request, then the score can be greater than 0.
- socre = 100 means the response is 1) grounded on successful API call, 2) the response can respond to the user query similar to the ground truth response.
3. Final Score Calculation:
- Compute the final score by averaging the individual scores for each aspect of the query.
- For example, if the user query requests 5 tasks, the AI response only does 3 tasks, and the quality of the response is 80, 90, 70, then the final score is (80 + 90 + 70 + 0 + 0) / 5 = 48.

Input Data:
User query:
{query}

Tool use trace:
{tool_use_trace}

The response to evaluate:
{pred}

Ground truth response:
{gt}
)";

const char* kFilter = R"(You are reviewing entries of an API library for annotation quality.
Decide whether the following API is well enough documented to be usable by an agent: it needs a meaningful name and a description that says what it does. Placeholder or test entries must be rejected.

API entry:
{api_spec}

Reply in the required data structure with `keep` (boolean) and a short `reason`.
)";

const char* kWriter = R"(You are a response writer. Compose the reply an assistant should give the user, grounded ONLY on the tool use trace below. Summarize what succeeded; if nothing useful was retrieved, say so plainly.

User query:
{query}

Tool use trace:
{tool_use_trace}
)";

const char* kQueryGen = R"(You are given a small set of APIs. Invent a realistic user query that would require using these APIs to answer. The query must be self-contained and concrete.

Available APIs:
{api_all}

Reply in the required data structure.
)";

const char* kStandardAgent = R"(You are a tool-use assistant. You will be given a user query and a set of callable tools.
Predict ALL of the tool calls needed to answer the query in ONE reply, using the tool-calling interface. Do not ask clarifying questions. After the tool calls are executed you will not get another turn.
)";

const char* kReactAgent = R"(You are a tool-use assistant operating step by step. In each turn, either return exactly ONE tool call, or, when you have everything you need, reply with the final answer as plain text.
If the task cannot be completed with the available tools, reply with a plain-text message starting with DEAD END.
)";

std::map<std::string, std::string> builtin_templates() {
    return {
        {"proposer", kProposer},
        {"executor", kExecutor},
        {"selector", kSelector},
        {"inverse_prediction", kInverse},
        {"judge", kJudge},
        {"filter", kFilter},
        {"writer", kWriter},
        {"query_gen", kQueryGen},
        {"standard_agent", kStandardAgent},
        {"react_agent", kReactAgent},
    };
}

}  // namespace

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    lib.templates_ = builtin_templates();
    return lib;
}

PromptLibrary PromptLibrary::load_dir(const std::string& dir) {
    PromptLibrary lib = builtin();
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("prompt dir not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        lib.templates_[entry.path().stem().string()] = read_text_file(entry.path().string());
    }
    return lib;
}

const std::string& PromptLibrary::text(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw std::runtime_error("unknown prompt template: " + name);
    return it->second;
}

bool PromptLibrary::has(const std::string& name) const { return templates_.count(name) > 0; }

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& values) const {
    std::string out = text(name);
    for (const auto& [key, value] : values) {
        std::string needle = "{" + key + "}";
        size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

std::map<std::string, std::string> PromptLibrary::versions() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, text] : templates_) out[name] = sha256_hex(text).substr(0, 12);
    return out;
}

}  // namespace toolweave
