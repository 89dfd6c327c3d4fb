#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "toolweave/eval.hpp"
#include "toolweave/negatives.hpp"
#include "toolweave/persist.hpp"

using namespace toolweave;

namespace {

PromptLibrary make_prompts(const AppConfig& cfg) {
    return cfg.prompts_dir.empty() ? PromptLibrary::builtin() : PromptLibrary::load_dir(cfg.prompts_dir);
}

ToolEnv make_env(const AppConfig& cfg, const Registry& reg) {
    if (cfg.mode == "live") return ToolEnv::live(reg);
    SimProfile profile;
    if (!cfg.sim_profile_path.empty()) profile = SimProfile::load(cfg.sim_profile_path);
    return ToolEnv::simulated(reg, std::move(profile));
}

std::unique_ptr<EmbeddingProvider> make_embedder(const AppConfig& cfg) {
    if (cfg.embed_provider == "remote") {
        if (cfg.embed_base_url.empty()) {
            throw ConfigError("remote embeddings need embeddings.base_url or EMBED_BASE_URL");
        }
        return std::make_unique<RemoteEmbeddingProvider>(cfg.embed_base_url, cfg.embed_model,
                                                         cfg.embed_api_key_env,
                                                         static_cast<size_t>(cfg.embed_dim));
    }
    return std::make_unique<HashedLocalProvider>(cfg.embed_seed, static_cast<size_t>(cfg.embed_dim));
}

// --- filter-apis ------------------------------------------------------------------

int cmd_filter_apis(const std::string& config_path, std::string in_path, const std::string& out_path,
                    std::string rejected_path, std::string progress_path, bool resume) {
    AppConfig cfg = AppConfig::load(config_path);
    if (in_path.empty()) in_path = cfg.registry_path;
    if (in_path.empty()) throw ConfigError("no input registry (config 'registry' or --in)");
    if (rejected_path.empty()) rejected_path = out_path + ".rejected.json";
    if (progress_path.empty()) progress_path = out_path + ".progress.jsonl";

    Registry reg = load_registry(in_path);
    PromptLibrary prompts = make_prompts(cfg);
    auto backend = make_backend(cfg.backend);

    std::map<std::string, FilterVerdict> already;
    if (resume) {
        for (const auto& line : read_jsonl(progress_path).lines) {
            already[line.at("id").get<std::string>()] =
                FilterVerdict{line.at("keep").get<bool>(), line.value("reason", std::string{})};
        }
    }

    std::ofstream progress(progress_path, resume ? std::ios::app : std::ios::trunc);
    if (!progress) throw std::runtime_error("cannot open progress file: " + progress_path);

    CostLedger ledger;
    FilterOutcome outcome;
    try {
        outcome = filter_registry(reg, *backend, prompts, ledger, resume ? &already : nullptr,
                                  [&](const std::string& id, const FilterVerdict& v) {
                                      progress << Json{{"id", id}, {"keep", v.keep}, {"reason", v.reason}}.dump()
                                               << "\n";
                                      progress.flush();
                                  });
    } catch (const GatewayError& e) {
        std::cerr << "gateway failure; progress persisted, rerun with --resume: " << e.what() << "\n";
        return 3;
    }

    save_registry(outcome.kept, out_path);
    Json rejected = Json::array();
    for (const auto& [id, reason] : outcome.rejected) {
        rejected.push_back({{"id", id}, {"reason", reason}});
    }
    write_text_file(rejected_path,
                    Json{{"input", reg.size()},
                         {"kept", outcome.kept.size()},
                         {"rejected", rejected}}
                        .dump(2) +
                        "\n");
    std::cout << "filtered " << reg.size() << " apis: kept " << outcome.kept.size() << ", rejected "
              << outcome.rejected.size() << " (llm filter calls: " << ledger.llm(Role::Filter)
              << ")\n";
    return 0;
}

// --- generate ------------------------------------------------------------------------

int cmd_generate(const std::string& config_path, const std::string& out_path, int count,
                 uint64_t seed, int workers, bool resume, std::string manifest_path) {
    AppConfig cfg = AppConfig::load(config_path);
    if (count < 0) throw ConfigError("count must be >= 0");
    if (manifest_path.empty()) manifest_path = out_path + ".manifest.json";

    Registry reg = load_registry(cfg.registry_path);
    ToolEnv env = make_env(cfg, reg);
    PromptLibrary prompts = make_prompts(cfg);
    auto backend = make_backend(cfg.backend);

    RunManifest manifest;
    manifest.config_snapshot = cfg.to_json();
    manifest.registry_digest = sha256_hex(read_text_file(cfg.registry_path));
    manifest.prompt_versions = prompts.versions();
    manifest.backend_identity = backend->identity();
    manifest.started_at = now_iso8601();

    // Resume: keep the valid line prefix, regenerate everything after it.
    uint64_t start = 0;
    std::vector<Json> kept_lines;
    if (resume) {
        auto existing = read_jsonl(out_path);
        kept_lines = existing.lines;
        start = kept_lines.size();
        if (existing.truncated_tail) {
            std::cerr << "note: dropping partial trailing line at index " << start << "\n";
        }
        for (const auto& line : kept_lines) {
            Sample s = Sample::from_json(line);
            manifest.aggregate_ledger = ledger_merge(manifest.aggregate_ledger, s.ledger);
            manifest.samples_total += 1;
            if (s.passed) manifest.samples_passed += 1;
        }
    }

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset: " + out_path);
    for (const auto& line : kept_lines) out << line.dump() << "\n";
    out.flush();

    uint64_t total = static_cast<uint64_t>(count);
    std::vector<std::optional<Sample>> results(total);
    std::atomic<uint64_t> next{start};
    std::mutex mu;
    std::condition_variable cv;
    std::string worker_error;

    auto work = [&] {
        for (;;) {
            uint64_t i = next.fetch_add(1);
            if (i >= total) return;
            RunConfig rc = cfg.run;
            rc.seed = mix64(seed, i);
            Sample s;
            try {
                s = run_sample(rc, reg, *backend, env, prompts);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                if (worker_error.empty()) worker_error = e.what();
                cv.notify_all();
                return;
            }
            s.index = i;
            {
                std::lock_guard<std::mutex> lock(mu);
                results[i] = std::move(s);
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    for (int w = 0; w < std::max(workers, 1); ++w) pool.emplace_back(work);

    int exit_code = 0;
    for (uint64_t i = start; i < total; ++i) {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return results[i].has_value() || !worker_error.empty(); });
        if (!results[i]) break;
        Sample sample = std::move(*results[i]);
        results[i].reset();
        lock.unlock();

        if (sample.aborted_reason) {
            // Transport-level failure: stop cleanly so --resume regenerates
            // this index instead of recording a poisoned sample.
            std::cerr << "stopping at sample " << i << ": " << *sample.aborted_reason << "\n";
            exit_code = 3;
            next.store(total);
            break;
        }
        out << sample.to_json().dump() << "\n";
        out.flush();
        manifest.aggregate_ledger = ledger_merge(manifest.aggregate_ledger, sample.ledger);
        manifest.samples_total += 1;
        if (sample.passed) manifest.samples_passed += 1;
    }
    next.store(total);
    cv.notify_all();
    for (auto& t : pool) t.join();

    if (!worker_error.empty()) {
        std::cerr << "worker failed: " << worker_error << "\n";
        exit_code = 3;
    }

    manifest.finished_at = now_iso8601();
    write_text_file(manifest_path, manifest.to_json().dump(2) + "\n");
    std::cout << "wrote " << manifest.samples_total << " samples (" << manifest.samples_passed
              << " passed) to " << out_path << "\n";
    return exit_code;
}

// --- negatives ------------------------------------------------------------------------

int cmd_negatives(const std::string& config_path, const std::string& in_path, std::string out_path,
                  int p) {
    AppConfig cfg = AppConfig::load(config_path);
    if (out_path.empty()) out_path = in_path;
    if (p <= 0) p = cfg.run.p;

    Registry reg = load_registry(cfg.registry_path);
    auto embedder = make_embedder(cfg);
    EmbeddingIndex index = build_index(reg, *embedder);
    SimilarityAgg agg = cfg.negatives_agg == "mean" ? SimilarityAgg::Mean : SimilarityAgg::Max;

    auto file = read_jsonl(in_path);
    if (file.lines.empty() && file.truncated_tail) {
        throw std::runtime_error(in_path + ": dataset unreadable");
    }

    size_t annotated = 0, skipped = 0;
    std::vector<Json> out_lines;
    for (auto& line : file.lines) {
        Sample sample = Sample::from_json(line);
        auto positives = sample.workflow.api_ids();
        if (positives.empty()) {
            ++skipped;
            out_lines.push_back(std::move(line));
            continue;
        }
        if (positives.size() > static_cast<size_t>(p)) {
            std::cerr << "sample " << sample.index << ": " << positives.size()
                      << " positives exceed p=" << p << ", skipped\n";
            ++skipped;
            out_lines.push_back(std::move(line));
            continue;
        }
        sample.negative_api_ids = sample_negatives(positives, reg, index, p, agg);
        auto violations = sample_validate(sample, p, reg.size());
        if (!violations.empty()) {
            std::cerr << "sample " << sample.index << " failed validation: " << violations.front()
                      << "\n";
        }
        ++annotated;
        out_lines.push_back(sample.to_json());
    }
    write_jsonl(out_path, out_lines);
    std::cout << "annotated " << annotated << " samples with negatives (p=" << p << "), skipped "
              << skipped << "\n";
    return 0;
}

// --- evaluate ------------------------------------------------------------------------

int cmd_evaluate(const std::string& config_path, const std::string& in_path,
                 const std::string& out_path, std::vector<std::string> frameworks) {
    AppConfig cfg = AppConfig::load(config_path);
    if (frameworks.empty()) frameworks = cfg.frameworks;

    Registry reg = load_registry(cfg.registry_path);
    ToolEnv env = make_env(cfg, reg);
    PromptLibrary prompts = make_prompts(cfg);

    auto agent = make_backend(cfg.agent_backend.value_or(cfg.backend));
    auto writer = make_backend(cfg.writer_backend.value_or(cfg.backend));
    auto judge = make_backend(cfg.judge_backend.value_or(cfg.backend));
    EvalBackends backends{*agent, *writer, *judge};

    EvalOptions opts;
    opts.react_cap = cfg.react_cap;
    opts.dfs_budget = cfg.dfs_budget;
    opts.tool_timeout_ms = cfg.run.tool_timeout_ms;

    auto samples = read_dataset(in_path);
    if (samples.empty()) throw ConfigError(in_path + ": dataset is empty");

    std::vector<EvalRecord> records;
    size_t skipped = 0;
    for (const auto& sample : samples) {
        if (!sample.passed || sample.workflow.empty()) {
            ++skipped;
            continue;
        }
        for (const auto& fw : frameworks) {
            records.push_back(evaluate_sample(sample, fw, backends, env, prompts, opts));
        }
    }
    if (records.empty()) throw std::runtime_error("no evaluable samples (all failed or empty)");

    std::vector<Json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(r.to_json());
    write_jsonl(out_path, lines);

    EvalSummary summary = aggregate_report(records);
    std::cout << summary.to_text_table();
    std::cout << "wrote " << records.size() << " records to " << out_path << " (skipped " << skipped
              << " unevaluable samples)\n";
    return 0;
}

// --- baseline-dfs ------------------------------------------------------------------------

int cmd_baseline(const std::string& config_path, const std::string& out_path, int count,
                 uint64_t seed, int subset_size) {
    AppConfig cfg = AppConfig::load(config_path);
    if (count <= 0) count = cfg.baseline_count;
    if (subset_size <= 0) subset_size = cfg.baseline_subset_size;

    Registry reg = load_registry(cfg.registry_path);
    ToolEnv env = make_env(cfg, reg);
    PromptLibrary prompts = make_prompts(cfg);
    auto backend = make_backend(cfg.agent_backend.value_or(cfg.backend));

    BaselineRun run = run_baseline(reg, *backend, env, prompts, count, subset_size, cfg.dfs_budget, seed);

    std::vector<Json> lines;
    for (const auto& r : run.results) lines.push_back(r.to_json());
    write_jsonl(out_path, lines);
    write_text_file(out_path + ".summary.json", run.aggregate.to_json().dump(2) + "\n");

    std::cout << "baseline-dfs over " << count << " samples: pass_rate=" << run.aggregate.pass_rate
              << "% mean_tool_uses(passed)=" << run.aggregate.mean_tool_uses_passed
              << " mean_llm_cost=" << run.aggregate.mean_llm_cost
              << " mean_tool_cost=" << run.aggregate.mean_tool_cost << "\n";
    return 0;
}

// --- report ------------------------------------------------------------------------

int cmd_report(const std::string& in_path, const std::string& out_path,
               const std::string& baseline_path) {
    auto file = read_jsonl(in_path);
    if (file.lines.empty()) throw ConfigError(in_path + ": no eval records");

    std::vector<EvalRecord> records;
    for (const auto& line : file.lines) records.push_back(EvalRecord::from_json(line));
    EvalSummary summary = aggregate_report(records);

    Json out = summary.to_json();
    if (!baseline_path.empty()) {
        std::vector<BaselineResult> results;
        for (const auto& line : read_jsonl(baseline_path).lines) {
            results.push_back(BaselineResult::from_json(line));
        }
        out["baseline"] = aggregate_baseline(results).to_json();
    }
    if (!out_path.empty()) write_text_file(out_path, out.dump(2) + "\n");
    std::cout << summary.to_text_table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"answer-first tool-use dataset generator and evaluation harness"};
    app.require_subcommand(1);

    std::string config, in_path, out_path, rejected, progress, manifest, baseline_path;
    std::vector<std::string> frameworks;
    int count = -1, workers = 0, p = -1, subset_size = -1;
    uint64_t seed = 0;
    bool seed_set = false, resume = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* copt = cmd->add_option("--config", config, "config JSON path");
        if (needs_config) copt->required();
        cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
        cmd->add_flag("--resume", resume, "resume an interrupted run");
    };

    auto* filter = app.add_subcommand("filter-apis", "LLM-filter an API registry");
    add_common(filter, true);
    filter->add_option("--in", in_path, "input registry (defaults to config registry)");
    filter->add_option("--out", out_path, "kept registry path")->required();
    filter->add_option("--rejected", rejected, "rejection report path");
    filter->add_option("--progress", progress, "progress file path");

    auto* generate = app.add_subcommand("generate", "generate a dataset of verified samples");
    add_common(generate, true);
    generate->add_option("--out", out_path, "dataset JSONL path")->required();
    generate->add_option("--count", count, "number of samples");
    generate->add_option("--workers", workers, "parallel workers");
    generate->add_option("--manifest", manifest, "manifest path");

    auto* negatives = app.add_subcommand("negatives", "annotate a dataset with negative tools");
    add_common(negatives, true);
    negatives->add_option("--in", in_path, "dataset JSONL path")->required();
    negatives->add_option("--out", out_path, "output path (defaults to --in)");
    negatives->add_option("--p", p, "total tool slots per sample");

    auto* evaluate = app.add_subcommand("evaluate", "run inference frameworks over a dataset");
    add_common(evaluate, true);
    evaluate->add_option("--in", in_path, "dataset JSONL path")->required();
    evaluate->add_option("--out", out_path, "eval records JSONL path")->required();
    evaluate->add_option("--frameworks", frameworks, "frameworks to run")
        ->delimiter(',')
        ->check(CLI::IsMember({"standard", "react", "dfs"}));

    auto* baseline = app.add_subcommand("baseline-dfs", "query-first DFS baseline generation");
    add_common(baseline, true);
    baseline->add_option("--out", out_path, "baseline results JSONL path")->required();
    baseline->add_option("--count", count, "number of baseline samples");
    baseline->add_option("--subset-size", subset_size, "API pool size per query");

    auto* report = app.add_subcommand("report", "summarize eval records");
    add_common(report, false);
    report->add_option("--in", in_path, "eval records JSONL path")->required();
    report->add_option("--out", out_path, "summary JSON path");
    report->add_option("--baseline", baseline_path, "baseline results JSONL to fold in");

    CLI11_PARSE(app, argc, argv);

    try {
        if (filter->parsed()) {
            return cmd_filter_apis(config, in_path, out_path, rejected, progress, resume);
        }
        if (generate->parsed()) {
            AppConfig cfg = AppConfig::load(config);
            if (count < 0) count = cfg.generate_count;
            if (workers <= 0) workers = cfg.workers;
            if (!seed_set) seed = cfg.run.seed;
            return cmd_generate(config, out_path, count, seed, workers, resume, manifest);
        }
        if (negatives->parsed()) return cmd_negatives(config, in_path, out_path, p);
        if (evaluate->parsed()) return cmd_evaluate(config, in_path, out_path, frameworks);
        if (baseline->parsed()) {
            if (!seed_set) seed = AppConfig::load(config).run.seed;
            return cmd_baseline(config, out_path, count, seed, subset_size);
        }
        if (report->parsed()) return cmd_report(in_path, out_path, baseline_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
