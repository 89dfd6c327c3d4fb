#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolweave/gateway.hpp"
#include "toolweave/model.hpp"
#include "toolweave/prompts.hpp"

namespace toolweave {

struct RegistryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- registry -------------------------------------------------------------------

class Registry {
public:
    Registry() = default;
    Registry(std::vector<ApiSpec> apis, std::string source_meta);

    bool has(const std::string& id) const { return by_id_.count(id) > 0; }
    const ApiSpec& get(const std::string& id) const;
    size_t size() const { return by_id_.size(); }
    const std::vector<std::string>& sorted_ids() const { return sorted_ids_; }
    const std::string& source_meta() const { return source_meta_; }

    std::vector<ApiSpec> specs() const;
    Json to_json() const;

private:
    std::map<std::string, ApiSpec> by_id_;
    std::vector<std::string> sorted_ids_;
    std::string source_meta_;
};

// JSON array of ApiSpec records. Malformed entries and duplicate ids raise
// RegistryError naming the offending indices.
Registry load_registry(const std::string& path);
Registry registry_from_json(const Json& doc, const std::string& source_meta);
void save_registry(const Registry& reg, const std::string& path);

// --- quality filtering -----------------------------------------------------------

// Cheap pre-pass for obviously junk entries; the LLM verdict stays
// authoritative for everything else.
std::optional<std::string> heuristic_reject_reason(const ApiSpec& spec);

struct FilterVerdict {
    bool keep = false;
    std::string reason;
};

struct FilterOutcome {
    Registry kept;
    std::vector<std::pair<std::string, std::string>> rejected;  // id, reason
};

using FilterProgress = std::function<void(const std::string& id, const FilterVerdict&)>;

// Judges every API: heuristics first, then a structured LLM verdict.
// `already` short-circuits ids judged in a previous run; on_verdict fires
// after each fresh verdict so callers can persist progress before a gateway
// failure aborts the pass.
FilterOutcome filter_registry(const Registry& reg, Backend& gateway, const PromptLibrary& prompts,
                              CostLedger& ledger,
                              const std::map<std::string, FilterVerdict>* already = nullptr,
                              const FilterProgress& on_verdict = {});

// --- simulated environment ----------------------------------------------------------

struct SimBehavior {
    bool unsolvable = false;
    double failure_rate = 0.0;
    int64_t latency_min_ms = 5;
    int64_t latency_max_ms = 50;
    Json body_template;  // merged into successful bodies when set

    static SimBehavior from_json(const Json& j);
    Json to_json() const;
};

struct SimProfile {
    uint64_t seed = 0;
    SimBehavior default_behavior;
    std::map<std::string, SimBehavior> behaviors;

    const SimBehavior& for_api(const std::string& api_id) const;

    static SimProfile from_json(const Json& j);
    static SimProfile load(const std::string& path);
    Json to_json() const;
};

// --- execution -------------------------------------------------------------------------

// Tool execution against either the deterministic simulator or live HTTP
// endpoints declared in ApiSpec. Safe for concurrent calls.
class ToolEnv {
public:
    static ToolEnv simulated(Registry reg, SimProfile profile);
    static ToolEnv live(Registry reg);

    // Unknown api_id raises RegistryError. Timeouts come back as
    // status=timeout responses, never exceptions. When a ledger is given,
    // tool_calls is incremented by exactly 1.
    ToolResponse execute(const ToolCallRequest& req, int timeout_ms,
                         CostLedger* ledger = nullptr) const;

    const Registry& registry() const { return registry_; }
    bool is_simulated() const { return simulated_; }
    const SimProfile& profile() const { return profile_; }

private:
    ToolEnv(Registry reg, SimProfile profile, bool simulated);

    Registry registry_;
    SimProfile profile_;
    bool simulated_ = true;
};

}  // namespace toolweave
