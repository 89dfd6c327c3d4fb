#include <doctest.h>

#include <filesystem>

#include "test_support.hpp"
#include "toolweave/persist.hpp"
#include "toolweave/prompts.hpp"

using namespace toolweave;
using namespace toolweave::testing;

TEST_CASE("jsonl round-trip over randomized samples") {
    TempDir dir;
    Rng rng(64);
    std::vector<Sample> samples;
    for (int i = 0; i < 25; ++i) {
        Sample s;
        s.index = static_cast<uint64_t>(i);
        s.seed = rng.next();
        s.query = "query " + hex8(rng.next());
        s.response = "response " + hex8(rng.next());
        size_t steps = rng.bounded(5);
        for (size_t k = 0; k < steps; ++k) {
            ExecutionStep step{{"api_" + std::to_string(rng.bounded(9)), Json{{"k", k}}},
                               {rng.bounded(2) ? CallStatus::Success : CallStatus::Error,
                                Json{{"v", hex8(rng.next())}}, static_cast<int64_t>(rng.bounded(100))},
                               0};
            bool fresh = s.workflow.chains.empty() || rng.bounded(2) == 0;
            s.workflow = workflow_add(s.workflow, step,
                                      fresh ? ChainTarget::new_chain()
                                            : ChainTarget::at(rng.bounded(s.workflow.chains.size())));
        }
        s.passed = !s.workflow.empty();
        if (!s.passed) {
            s.query.clear();
            s.response.clear();
        }
        s.ledger.add_llm(Role::Proposer, static_cast<int64_t>(rng.bounded(10)));
        s.ledger.tool_calls = static_cast<int64_t>(rng.bounded(30));
        samples.push_back(std::move(s));
    }

    std::vector<Json> lines;
    for (const auto& s : samples) lines.push_back(s.to_json());
    write_jsonl(dir.file("data.jsonl"), lines);

    auto back = read_dataset(dir.file("data.jsonl"));
    REQUIRE(back.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(back[i].to_json().dump() == samples[i].to_json().dump());
    }
}

TEST_CASE("read_jsonl tolerates an interrupted trailing line") {
    TempDir dir;
    std::string path = dir.file("partial.jsonl");
    write_text_file(path, "{\"a\":1}\n{\"b\":2}\n{\"c\": 3,  \"trunc");
    auto file = read_jsonl(path);
    CHECK(file.lines.size() == 2);
    CHECK(file.truncated_tail);
}

TEST_CASE("manifest aggregate equals the fold of per-sample ledgers") {
    RunManifest manifest;
    Rng rng(9);
    CostLedger expect;
    for (int i = 0; i < 12; ++i) {
        CostLedger l;
        l.add_llm(Role::Proposer, static_cast<int64_t>(rng.bounded(5)));
        l.add_llm(Role::Executor, static_cast<int64_t>(rng.bounded(5)));
        l.executor_sessions = static_cast<int64_t>(rng.bounded(5));
        l.tool_calls = static_cast<int64_t>(rng.bounded(9));
        expect = ledger_merge(expect, l);
        manifest.aggregate_ledger = ledger_merge(manifest.aggregate_ledger, l);
    }
    CHECK(manifest.aggregate_ledger.to_json() == expect.to_json());

    manifest.registry_digest = sha256_hex("registry bytes");
    manifest.prompt_versions = PromptLibrary::builtin().versions();
    manifest.samples_total = 12;
    RunManifest back = RunManifest::from_json(manifest.to_json());
    CHECK(back.to_json() == manifest.to_json());
}

TEST_CASE("app config parses, validates, and round-trips") {
    TempDir dir;
    Json cfg_json{
        {"backend", {{"kind", "scripted"}, {"script_path", "script.json"}}},
        {"registry", "reg.json"},
        {"mode", "sim"},
        {"run", {{"m", 2}, {"bs", 10}, {"iterations", 4}, {"p", 8}, {"seed", 5}}},
        {"generate_count", 7},
        {"workers", 2},
        {"embeddings", {{"provider", "hashed-local"}, {"dim", 64}, {"seed", 3}}},
        {"eval", {{"frameworks", Json::array({"standard", "react"})}, {"react_cap", 6}}},
    };
    write_text_file(dir.file("config.json"), cfg_json.dump());
    AppConfig cfg = AppConfig::load(dir.file("config.json"));
    CHECK(cfg.backend.kind == BackendConfig::Kind::Scripted);
    CHECK(cfg.run.m == 2);
    CHECK(cfg.run.p == 8);
    CHECK(cfg.workers == 2);
    CHECK(cfg.embed_dim == 64);
    CHECK(cfg.frameworks.size() == 2);

    AppConfig again = AppConfig::from_json(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());

    write_text_file(dir.file("bad.json"), "{\"mode\": \"weird\"}");
    CHECK_THROWS_AS(AppConfig::load(dir.file("bad.json")), ConfigError);
    write_text_file(dir.file("bad2.json"), "{\"run\": {\"m\": 90, \"bs\": 3}}");
    CHECK_THROWS_AS(AppConfig::load(dir.file("bad2.json")), ConfigError);
}

TEST_CASE("shipped prompt assets match the builtin templates") {
    auto assets_dir = std::filesystem::path(TOOLWEAVE_SOURCE_DIR) / "assets" / "prompts";
    REQUIRE(std::filesystem::is_directory(assets_dir));
    PromptLibrary from_disk = PromptLibrary::load_dir(assets_dir.string());
    PromptLibrary builtin = PromptLibrary::builtin();
    for (const auto& [name, digest] : builtin.versions()) {
        INFO("template: ", name);
        CHECK(from_disk.versions().at(name) == digest);
    }
    // every builtin template exists as an asset file
    for (const auto& [name, _] : builtin.versions()) {
        CHECK(std::filesystem::exists(assets_dir / (name + ".txt")));
    }
}

TEST_CASE("prompt placeholders render and unknown templates raise") {
    PromptLibrary lib = PromptLibrary::builtin();
    std::string out = lib.render("inverse_prediction", {{"api_use_chains", "XYZ"}});
    CHECK(out.find("XYZ") != std::string::npos);
    CHECK(out.find("{api_use_chains}") == std::string::npos);
    CHECK_THROWS(lib.text("nonexistent_template"));
}
