#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolweave/baseline.hpp"
#include "toolweave/engine.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/model.hpp"

namespace toolweave {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Single JSON config file; env vars override secrets and endpoints
// (LLM_BASE_URL, LLM_API_KEY, EMBED_BASE_URL, EMBED_API_KEY). Secrets never
// enter manifests.
struct AppConfig {
    BackendConfig backend;                          // generation roles
    std::optional<BackendConfig> agent_backend;     // eval agent; defaults to backend
    std::optional<BackendConfig> writer_backend;
    std::optional<BackendConfig> judge_backend;

    std::string registry_path;
    std::string sim_profile_path;
    std::string mode = "sim";  // sim | live
    std::string prompts_dir;

    RunConfig run;
    int generate_count = 10;
    int workers = 1;

    std::string embed_provider = "hashed-local";  // hashed-local | remote
    int embed_dim = 256;
    uint64_t embed_seed = 7;
    std::string embed_base_url;
    std::string embed_model = "text-embedding-3-small";
    std::string embed_api_key_env = "EMBED_API_KEY";
    std::string negatives_agg = "max";  // max | mean

    std::vector<std::string> frameworks = {"standard", "react", "dfs"};
    int react_cap = 10;
    DfsBudget dfs_budget;
    int baseline_count = 10;
    int baseline_subset_size = 5;

    static AppConfig load(const std::string& path);
    static AppConfig from_json(const Json& j);
    Json to_json() const;  // round-trips everything except env-provided secrets
};

struct RunManifest {
    Json config_snapshot;
    std::string registry_digest;  // sha256 of the registry file bytes
    std::map<std::string, std::string> prompt_versions;
    std::string backend_identity;
    std::string started_at;
    std::string finished_at;
    CostLedger aggregate_ledger;
    int samples_total = 0;
    int samples_passed = 0;

    Json to_json() const;
    static RunManifest from_json(const Json& j);
};

// --- JSONL ------------------------------------------------------------------------

// Parses one JSON document per line. A trailing partial line (interrupted
// write) is reported via truncated_tail rather than failing the whole file.
struct JsonlFile {
    std::vector<Json> lines;
    bool truncated_tail = false;
};

JsonlFile read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<Json>& lines);

std::vector<Sample> read_dataset(const std::string& path);

}  // namespace toolweave
