#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "toolweave/engine.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/toolenv.hpp"

namespace toolweave::testing {

struct LambdaBackend : Backend {
    std::function<BackendReply(const ChatRequest&)> fn;

    explicit LambdaBackend(std::function<BackendReply(const ChatRequest&)> f) : fn(std::move(f)) {}
    BackendReply complete(const ChatRequest& request) override { return fn(request); }
    std::string identity() const override { return "lambda"; }
};

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0;; ++i) {
            auto candidate = base / ("toolweave_test_" + std::to_string(::getpid()) + "_" +
                                     std::to_string(splitmix64(i ^ reinterpret_cast<uintptr_t>(this))));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path = candidate;
                return;
            }
        }
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline ApiSpec make_api(const std::string& id, const std::string& name, const std::string& desc) {
    ApiSpec s;
    s.id = id;
    s.name = name;
    s.description = desc;
    s.params = {{"query", ParamKind::String, true, "what to look up"}};
    return s;
}

inline Registry make_registry(int n, const std::string& prefix = "api") {
    std::vector<ApiSpec> specs;
    for (int i = 0; i < n; ++i) {
        std::string id = prefix + "_" + std::to_string(i);
        specs.push_back(make_api(id, id, "service " + std::to_string(i) + " returning records about topic " +
                                             hex8(splitmix64(static_cast<uint64_t>(i)))));
    }
    return Registry(std::move(specs), "fixture");
}

// Directive script driving every generation and eval role deterministically.
inline std::string oracle_script_json(bool vary_proposals = true) {
    Json rules = Json::array({
        Json{{"match", "prefix"},
             {"value", "[user]\nYou are tasked with augmenting an API-use workflow"},
             {"act", "propose_from_pool"},
             {"params", Json{{"count", 3}, {"vary", vary_proposals}}}},
        Json{{"match", "prefix"},
             {"value", "[system]\nYou are tasked with exploring an API"},
             {"act", "explore_tool"}},
        Json{{"match", "prefix"},
             {"value", "[user]\nYou are an API selector."},
             {"act", "select_first_success"},
             {"params", Json{{"chain", "auto"}}}},
        Json{{"match", "prefix"},
             {"value", "[user]\nGiven the following API usage chains:"},
             {"act", "inverse_summarize"}},
        Json{{"match", "prefix"},
             {"value", "[user]\nYou are reviewing entries of an API library"},
             {"act", "filter_verdict"},
             {"params", Json{{"reject_substrings", Json::array({"junk"})}}}},
        Json{{"match", "prefix"},
             {"value", "[user]\nYou are given a small set of APIs."},
             {"act", "query_from_pool"}},
        Json{{"match", "prefix"},
             {"value", "[system]\nYou are a tool-use assistant. You will be given a user query"},
             {"act", "call_tools"},
             {"params", Json{{"which", "all"}}}},
        Json{{"match", "prefix"},
             {"value", "[system]\nYou are a tool-use assistant operating step by step"},
             {"act", "dfs_agent"}},
        Json{{"match", "prefix"},
             {"value", "[user]\nYou are a response writer."},
             {"act", "write_summary"}},
        Json{{"match", "prefix"},
             {"value", "[user]\nTask Overview:"},
             {"act", "judge_fixed"},
             {"params", Json{{"tasks_total", 1}, {"scores", Json::array({85})}}}},
    });
    return rules.dump(2);
}

inline std::unique_ptr<ScriptedBackend> oracle_backend(bool vary_proposals = true) {
    return std::make_unique<ScriptedBackend>(parse_script(oracle_script_json(vary_proposals), "oracle"),
                                             "scripted:oracle");
}

inline SimProfile mixed_profile(uint64_t seed, double failure_rate,
                                const std::vector<std::string>& unsolvable_ids = {}) {
    SimProfile profile;
    profile.seed = seed;
    profile.default_behavior.failure_rate = failure_rate;
    for (const auto& id : unsolvable_ids) {
        SimBehavior b;
        b.unsolvable = true;
        profile.behaviors[id] = b;
    }
    return profile;
}

}  // namespace toolweave::testing
