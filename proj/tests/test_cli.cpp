#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "test_support.hpp"
#include "toolweave/persist.hpp"

using namespace toolweave;
using namespace toolweave::testing;

namespace {

int run_cli(const std::string& args, const std::string& log_path) {
    std::string cmd = std::string(TOOLWEAVE_CLI_PATH) + " " + args + " > " + log_path + " 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct CliFixture {
    TempDir dir;
    std::string config_path;
    std::string log;

    CliFixture() {
        Json arr = Json::array();
        for (int i = 0; i < 20; ++i) {
            arr.push_back(make_api("svc_" + std::to_string(i), "service_" + std::to_string(i),
                                   "returns data slice " + std::to_string(i))
                              .to_json());
        }
        write_text_file(dir.file("registry.json"), arr.dump());
        write_text_file(dir.file("script.json"), oracle_script_json());
        write_text_file(dir.file("simprofile.json"), mixed_profile(9, 0.1).to_json().dump());
        Json cfg{
            {"backend", {{"kind", "scripted"}, {"script_path", dir.file("script.json")}}},
            {"registry", dir.file("registry.json")},
            {"sim_profile", dir.file("simprofile.json")},
            {"mode", "sim"},
            {"run",
             {{"m", 3}, {"bs", 20}, {"iterations", 4}, {"p", 10}, {"seed", 21},
              {"tool_timeout_ms", 1000}}},
            {"embeddings", {{"provider", "hashed-local"}, {"dim", 32}, {"seed", 2}}},
        };
        config_path = dir.file("config.json");
        write_text_file(config_path, cfg.dump());
        log = dir.file("cli.log");
    }
};

}  // namespace

TEST_CASE("generate --count 0 writes an empty dataset plus a manifest") {
    CliFixture fx;
    std::string out = fx.dir.file("empty.jsonl");
    CHECK(run_cli("generate --config " + fx.config_path + " --out " + out + " --count 0", fx.log) == 0);
    CHECK(read_text_file(out).empty());
    RunManifest manifest = RunManifest::from_json(Json::parse(read_text_file(out + ".manifest.json")));
    CHECK(manifest.samples_total == 0);
    CHECK(!manifest.registry_digest.empty());
    CHECK(!manifest.prompt_versions.empty());
}

TEST_CASE("generate --resume completes an interrupted run without duplicating indices") {
    CliFixture fx;
    std::string full = fx.dir.file("full.jsonl");
    REQUIRE(run_cli("generate --config " + fx.config_path + " --out " + full + " --count 8", fx.log) == 0);
    std::string full_bytes = read_text_file(full);
    auto full_lines = read_jsonl(full).lines;
    REQUIRE(full_lines.size() == 8);

    // keep 3 complete lines plus a torn partial line, as a crash would leave
    std::string partial = fx.dir.file("partial.jsonl");
    {
        std::ofstream out(partial, std::ios::binary);
        for (int i = 0; i < 3; ++i) out << full_lines[static_cast<size_t>(i)].dump() << "\n";
        out << R"({"schema": "sample.v1", "index": 3, "que)";
    }
    REQUIRE(run_cli("generate --config " + fx.config_path + " --out " + partial +
                        " --count 8 --resume", fx.log) == 0);

    CHECK(read_text_file(partial) == full_bytes);
    auto resumed = read_dataset(partial);
    std::set<uint64_t> indices;
    for (const auto& s : resumed) CHECK(indices.insert(s.index).second);
    CHECK(indices.size() == 8);

    RunManifest manifest =
        RunManifest::from_json(Json::parse(read_text_file(partial + ".manifest.json")));
    CHECK(manifest.samples_total == 8);
}

TEST_CASE("filter-apis is a no-op on an already-complete progress file") {
    CliFixture fx;
    std::string kept = fx.dir.file("kept.json");
    REQUIRE(run_cli("filter-apis --config " + fx.config_path + " --out " + kept, fx.log) == 0);
    std::string first = read_text_file(kept);

    CHECK(run_cli("filter-apis --config " + fx.config_path + " --out " + kept + " --resume", fx.log) == 0);
    CHECK(read_text_file(kept) == first);
}

TEST_CASE("usage and data errors exit nonzero with diagnostics") {
    CliFixture fx;
    CHECK(run_cli("filter-apis --config " + fx.config_path + " --in " + fx.dir.file("nope.json") +
                      " --out " + fx.dir.file("k.json"), fx.log) != 0);

    write_text_file(fx.dir.file("empty.jsonl"), "");
    CHECK(run_cli("evaluate --config " + fx.config_path + " --in " + fx.dir.file("empty.jsonl") +
                      " --out " + fx.dir.file("r.jsonl"), fx.log) != 0);

    CHECK(run_cli("report --in " + fx.dir.file("missing.jsonl"), fx.log) != 0);
    CHECK(run_cli("generate --config " + fx.dir.file("no_config.json") + " --out " +
                      fx.dir.file("d.jsonl"), fx.log) != 0);
    CHECK(run_cli("negatives --config " + fx.config_path, fx.log) != 0);  // missing --in
}

TEST_CASE("negatives reports and skips lines whose positives exceed p") {
    CliFixture fx;
    Sample s;
    s.index = 0;
    s.seed = 1;
    s.query = "q";
    s.response = "r";
    s.passed = true;
    for (int i = 0; i < 4; ++i) {
        s.workflow = workflow_add(s.workflow,
                                  ExecutionStep{{"svc_" + std::to_string(i), Json::object()},
                                                {CallStatus::Success, Json(), 1}, 0},
                                  ChainTarget::new_chain());
    }
    std::string data = fx.dir.file("wide.jsonl");
    write_jsonl(data, {s.to_json()});

    CHECK(run_cli("negatives --config " + fx.config_path + " --in " + data + " --p 2", fx.log) == 0);
    auto back = read_dataset(data);
    REQUIRE(back.size() == 1);
    CHECK(back[0].negative_api_ids.empty());  // skipped, not annotated
    CHECK(read_text_file(fx.log).find("exceed p") != std::string::npos);
}
