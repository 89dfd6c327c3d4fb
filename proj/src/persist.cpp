#include "toolweave/persist.hpp"

#include <fstream>

namespace toolweave {

AppConfig AppConfig::load(const std::string& path) {
    Json doc = Json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw ConfigError(path + ": config is not valid JSON");
    AppConfig cfg = from_json(doc);

    if (const char* v = std::getenv("LLM_BASE_URL")) {
        if (*v) cfg.backend.base_url = v;
    }
    if (const char* v = std::getenv("EMBED_BASE_URL")) {
        if (*v) cfg.embed_base_url = v;
    }
    return cfg;
}

AppConfig AppConfig::from_json(const Json& j) {
    AppConfig cfg;
    try {
        if (j.contains("backend")) cfg.backend = BackendConfig::from_json(j.at("backend"));
        if (j.contains("agent_backend")) cfg.agent_backend = BackendConfig::from_json(j.at("agent_backend"));
        if (j.contains("writer_backend")) cfg.writer_backend = BackendConfig::from_json(j.at("writer_backend"));
        if (j.contains("judge_backend")) cfg.judge_backend = BackendConfig::from_json(j.at("judge_backend"));
        cfg.registry_path = j.value("registry", std::string{});
        cfg.sim_profile_path = j.value("sim_profile", std::string{});
        cfg.mode = j.value("mode", cfg.mode);
        cfg.prompts_dir = j.value("prompts_dir", std::string{});
        if (j.contains("run")) cfg.run = RunConfig::from_json(j.at("run"));
        cfg.generate_count = j.value("generate_count", cfg.generate_count);
        cfg.workers = j.value("workers", cfg.workers);

        if (j.contains("embeddings")) {
            const Json& e = j.at("embeddings");
            cfg.embed_provider = e.value("provider", cfg.embed_provider);
            cfg.embed_dim = e.value("dim", cfg.embed_dim);
            cfg.embed_seed = e.value("seed", cfg.embed_seed);
            cfg.embed_base_url = e.value("base_url", cfg.embed_base_url);
            cfg.embed_model = e.value("model", cfg.embed_model);
            cfg.embed_api_key_env = e.value("api_key_env", cfg.embed_api_key_env);
            cfg.negatives_agg = e.value("aggregation", cfg.negatives_agg);
        }
        if (j.contains("eval")) {
            const Json& e = j.at("eval");
            cfg.frameworks = e.value("frameworks", cfg.frameworks);
            cfg.react_cap = e.value("react_cap", cfg.react_cap);
            if (e.contains("dfs_budget")) cfg.dfs_budget = DfsBudget::from_json(e.at("dfs_budget"));
        }
        if (j.contains("baseline")) {
            const Json& b = j.at("baseline");
            cfg.baseline_count = b.value("count", cfg.baseline_count);
            cfg.baseline_subset_size = b.value("subset_size", cfg.baseline_subset_size);
            if (b.contains("dfs_budget")) cfg.dfs_budget = DfsBudget::from_json(b.at("dfs_budget"));
        }
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }

    if (cfg.mode != "sim" && cfg.mode != "live") throw ConfigError("mode must be 'sim' or 'live'");
    if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
    if (cfg.embed_provider != "hashed-local" && cfg.embed_provider != "remote") {
        throw ConfigError("embeddings.provider must be 'hashed-local' or 'remote'");
    }
    if (cfg.negatives_agg != "max" && cfg.negatives_agg != "mean") {
        throw ConfigError("embeddings.aggregation must be 'max' or 'mean'");
    }
    return cfg;
}

Json AppConfig::to_json() const {
    Json j;
    j["backend"] = backend.to_json();
    if (agent_backend) j["agent_backend"] = agent_backend->to_json();
    if (writer_backend) j["writer_backend"] = writer_backend->to_json();
    if (judge_backend) j["judge_backend"] = judge_backend->to_json();
    j["registry"] = registry_path;
    if (!sim_profile_path.empty()) j["sim_profile"] = sim_profile_path;
    j["mode"] = mode;
    if (!prompts_dir.empty()) j["prompts_dir"] = prompts_dir;
    j["run"] = run.to_json();
    j["generate_count"] = generate_count;
    j["workers"] = workers;
    j["embeddings"] = Json{{"provider", embed_provider}, {"dim", embed_dim},
                           {"seed", embed_seed},         {"base_url", embed_base_url},
                           {"model", embed_model},       {"api_key_env", embed_api_key_env},
                           {"aggregation", negatives_agg}};
    j["eval"] = Json{{"frameworks", frameworks}, {"react_cap", react_cap},
                     {"dfs_budget", dfs_budget.to_json()}};
    j["baseline"] = Json{{"count", baseline_count}, {"subset_size", baseline_subset_size}};
    return j;
}

Json RunManifest::to_json() const {
    return Json{{"schema", "manifest.v1"},
                {"config", config_snapshot},
                {"registry_digest", registry_digest},
                {"prompt_versions", prompt_versions},
                {"backend_identity", backend_identity},
                {"started_at", started_at},
                {"finished_at", finished_at},
                {"aggregate_ledger", aggregate_ledger.to_json()},
                {"samples_total", samples_total},
                {"samples_passed", samples_passed}};
}

RunManifest RunManifest::from_json(const Json& j) {
    RunManifest m;
    m.config_snapshot = j.value("config", Json::object());
    m.registry_digest = j.value("registry_digest", std::string{});
    if (j.contains("prompt_versions")) {
        m.prompt_versions = j.at("prompt_versions").get<std::map<std::string, std::string>>();
    }
    m.backend_identity = j.value("backend_identity", std::string{});
    m.started_at = j.value("started_at", std::string{});
    m.finished_at = j.value("finished_at", std::string{});
    m.aggregate_ledger = CostLedger::from_json(j.value("aggregate_ledger", Json::object()));
    m.samples_total = j.value("samples_total", 0);
    m.samples_passed = j.value("samples_passed", 0);
    return m;
}

JsonlFile read_jsonl(const std::string& path) {
    JsonlFile out;
    std::ifstream f(path);
    if (!f) return out;
    std::string line;
    while (std::getline(f, line)) {
        if (trim(line).empty()) continue;
        Json doc = Json::parse(line, nullptr, false);
        if (doc.is_discarded()) {
            out.truncated_tail = true;
            break;
        }
        out.lines.push_back(std::move(doc));
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<Json>& lines) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    for (const auto& l : lines) f << l.dump() << "\n";
}

std::vector<Sample> read_dataset(const std::string& path) {
    auto file = read_jsonl(path);
    std::vector<Sample> samples;
    samples.reserve(file.lines.size());
    for (const auto& line : file.lines) samples.push_back(Sample::from_json(line));
    return samples;
}

}  // namespace toolweave
