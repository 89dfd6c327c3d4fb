#include "toolweave/toolenv.hpp"

#include <algorithm>
#include <chrono>
#include <regex>

#include <httplib.h>

namespace toolweave {

Registry::Registry(std::vector<ApiSpec> apis, std::string source_meta)
    : source_meta_(std::move(source_meta)) {
    for (auto& spec : apis) {
        std::string id = spec.id;
        if (!by_id_.emplace(id, std::move(spec)).second) {
            throw RegistryError("duplicate api id: " + id);
        }
    }
    sorted_ids_.reserve(by_id_.size());
    for (const auto& [id, _] : by_id_) sorted_ids_.push_back(id);
}

const ApiSpec& Registry::get(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw RegistryError("unknown api id: " + id);
    return it->second;
}

std::vector<ApiSpec> Registry::specs() const {
    std::vector<ApiSpec> out;
    out.reserve(by_id_.size());
    for (const auto& id : sorted_ids_) out.push_back(by_id_.at(id));
    return out;
}

Json Registry::to_json() const {
    Json arr = Json::array();
    for (const auto& id : sorted_ids_) arr.push_back(by_id_.at(id).to_json());
    return arr;
}

Registry registry_from_json(const Json& doc, const std::string& source_meta) {
    if (!doc.is_array()) throw RegistryError(source_meta + ": registry file must be a JSON array");
    std::vector<ApiSpec> specs;
    std::vector<std::string> problems;
    std::map<std::string, size_t> seen;
    for (size_t i = 0; i < doc.size(); ++i) {
        try {
            ApiSpec spec = ApiSpec::from_json(doc[i]);
            if (spec.id.empty()) throw std::invalid_argument("empty id");
            if (spec.name.empty()) throw std::invalid_argument("empty name");
            auto [it, fresh] = seen.emplace(spec.id, i);
            if (!fresh) {
                throw std::invalid_argument("duplicate id '" + spec.id + "' (first at index " +
                                            std::to_string(it->second) + ")");
            }
            specs.push_back(std::move(spec));
        } catch (const std::exception& e) {
            problems.push_back("index " + std::to_string(i) + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string detail;
        for (const auto& p : problems) detail += "\n  " + p;
        throw RegistryError(source_meta + ": malformed registry entries:" + detail);
    }
    return Registry(std::move(specs), source_meta);
}

Registry load_registry(const std::string& path) {
    Json doc = Json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw RegistryError(path + ": not valid JSON");
    return registry_from_json(doc, path);
}

void save_registry(const Registry& reg, const std::string& path) {
    write_text_file(path, reg.to_json().dump(2) + "\n");
}

// --- quality filtering --------------------------------------------------------------

std::optional<std::string> heuristic_reject_reason(const ApiSpec& spec) {
    if (trim(spec.description).empty()) return "empty description";
    std::string n = to_lower(trim(spec.name));
    static const std::regex test_like(R"(^test([_\-. ].*)?$)");
    static const std::regex version_only(R"(^v[0-9]+$)");
    if (std::regex_match(n, test_like)) return "placeholder name";
    if (n.find("_for_test") != std::string::npos || n.find("test_for_") != std::string::npos) {
        return "placeholder name";
    }
    if (std::regex_match(n, version_only)) return "version-only name";
    return std::nullopt;
}

FilterOutcome filter_registry(const Registry& reg, Backend& gateway, const PromptLibrary& prompts,
                              CostLedger& ledger, const std::map<std::string, FilterVerdict>* already,
                              const FilterProgress& on_verdict) {
    StructuredSchema schema{"filter_verdict",
                            {{"keep", SchemaType::boolean()}, {"reason", SchemaType::string_()}}};

    std::vector<ApiSpec> kept;
    std::vector<std::pair<std::string, std::string>> rejected;

    auto apply = [&](const std::string& id, const FilterVerdict& v) {
        if (v.keep) kept.push_back(reg.get(id));
        else rejected.emplace_back(id, v.reason);
    };

    for (const auto& id : reg.sorted_ids()) {
        if (already) {
            auto it = already->find(id);
            if (it != already->end()) {
                apply(id, it->second);
                continue;
            }
        }
        const ApiSpec& spec = reg.get(id);
        FilterVerdict verdict;
        if (auto reason = heuristic_reject_reason(spec)) {
            verdict = {false, *reason + " (heuristic)"};
        } else {
            std::string prompt = prompts.render("filter", {{"api_spec", spec.to_json().dump()}});
            Json reply = chat_structured(gateway, {ChatMessage::user(prompt)}, schema, ledger, Role::Filter);
            verdict = {reply.at("keep").get<bool>(), reply.value("reason", std::string{})};
        }
        if (on_verdict) on_verdict(id, verdict);
        apply(id, verdict);
    }

    return FilterOutcome{Registry(std::move(kept), reg.source_meta() + " (filtered)"), std::move(rejected)};
}

// --- simulated environment -------------------------------------------------------------

SimBehavior SimBehavior::from_json(const Json& j) {
    SimBehavior b;
    b.unsolvable = j.value("unsolvable", false);
    b.failure_rate = j.value("failure_rate", 0.0);
    if (j.contains("latency_ms")) {
        b.latency_min_ms = j.at("latency_ms").value("min", int64_t{5});
        b.latency_max_ms = j.at("latency_ms").value("max", int64_t{50});
    }
    if (j.contains("template")) b.body_template = j.at("template");
    if (b.failure_rate < 0.0 || b.failure_rate > 1.0) {
        throw std::invalid_argument("failure_rate must be in [0,1]");
    }
    if (b.latency_max_ms < b.latency_min_ms) b.latency_max_ms = b.latency_min_ms;
    return b;
}

Json SimBehavior::to_json() const {
    Json j;
    j["unsolvable"] = unsolvable;
    j["failure_rate"] = failure_rate;
    j["latency_ms"] = Json{{"min", latency_min_ms}, {"max", latency_max_ms}};
    if (!body_template.is_null()) j["template"] = body_template;
    return j;
}

const SimBehavior& SimProfile::for_api(const std::string& api_id) const {
    auto it = behaviors.find(api_id);
    return it == behaviors.end() ? default_behavior : it->second;
}

SimProfile SimProfile::from_json(const Json& j) {
    SimProfile p;
    // Wrapped form: {"seed": ..., "default": ..., "apis": {id: behavior}}.
    // Bare form: a plain map of api_id -> behavior, with "seed" / "default"
    // recognized as reserved keys.
    p.seed = j.value("seed", uint64_t{0});
    if (j.contains("default")) p.default_behavior = SimBehavior::from_json(j.at("default"));
    if (j.contains("apis")) {
        for (auto it = j.at("apis").begin(); it != j.at("apis").end(); ++it) {
            p.behaviors[it.key()] = SimBehavior::from_json(it.value());
        }
        return p;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "seed" || it.key() == "default") continue;
        p.behaviors[it.key()] = SimBehavior::from_json(it.value());
    }
    return p;
}

SimProfile SimProfile::load(const std::string& path) {
    Json doc = Json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error(path + ": sim profile is not valid JSON");
    return from_json(doc);
}

Json SimProfile::to_json() const {
    Json apis = Json::object();
    for (const auto& [id, b] : behaviors) apis[id] = b.to_json();
    return Json{{"seed", seed}, {"default", default_behavior.to_json()}, {"apis", apis}};
}

// --- execution ----------------------------------------------------------------------------

ToolEnv::ToolEnv(Registry reg, SimProfile profile, bool simulated)
    : registry_(std::move(reg)), profile_(std::move(profile)), simulated_(simulated) {}

ToolEnv ToolEnv::simulated(Registry reg, SimProfile profile) {
    return ToolEnv(std::move(reg), std::move(profile), true);
}

ToolEnv ToolEnv::live(Registry reg) { return ToolEnv(std::move(reg), SimProfile{}, false); }

namespace {

std::string substitute_env(const std::string& value) {
    std::string out;
    size_t pos = 0;
    while (pos < value.size()) {
        size_t open = value.find("${", pos);
        if (open == std::string::npos) {
            out += value.substr(pos);
            break;
        }
        size_t close = value.find('}', open);
        if (close == std::string::npos) {
            out += value.substr(pos);
            break;
        }
        out += value.substr(pos, open - pos);
        std::string var = value.substr(open + 2, close - open - 2);
        if (const char* v = std::getenv(var.c_str())) out += v;
        pos = close + 1;
    }
    return out;
}

ToolResponse execute_sim(const SimProfile& profile, const ToolCallRequest& req, int timeout_ms) {
    const SimBehavior& b = profile.for_api(req.api_id);
    std::string canon = canonical_dump(req.arguments);
    uint64_t h = mix64(mix64(profile.seed, fnv1a64(req.api_id)), fnv1a64(canon));

    int64_t span = b.latency_max_ms - b.latency_min_ms + 1;
    int64_t latency = b.latency_min_ms + static_cast<int64_t>(splitmix64(h ^ 2) % static_cast<uint64_t>(span));

    ToolResponse resp;
    resp.latency_ms = latency;

    if (b.unsolvable) {
        resp.status = CallStatus::Error;
        resp.body = Json{{"error", "service permanently unavailable"}, {"api", req.api_id}};
        return resp;
    }
    if (latency >= timeout_ms) {
        resp.status = CallStatus::Timeout;
        resp.body = Json{{"error", "request timed out"}};
        return resp;
    }
    double failure_draw = static_cast<double>(splitmix64(h ^ 1) % 1000000ull) / 1.0e6;
    if (failure_draw < b.failure_rate) {
        resp.status = CallStatus::Error;
        resp.body = Json{{"error", "upstream failure"}, {"api", req.api_id}};
        return resp;
    }

    resp.status = CallStatus::Success;
    Json body{{"api", req.api_id},
              {"echo", canonicalize(req.arguments)},
              {"token", hex8(splitmix64(h ^ 3))}};
    if (!b.body_template.is_null()) body["data"] = b.body_template;
    resp.body = std::move(body);
    return resp;
}

ToolResponse execute_live(const ApiSpec& spec, const ToolCallRequest& req, int timeout_ms) {
    using clock = std::chrono::steady_clock;
    ToolResponse resp;
    if (!spec.endpoint) {
        resp.status = CallStatus::Error;
        resp.body = Json{{"error", "api has no endpoint configured"}};
        return resp;
    }

    auto started = clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - started).count();
    };

    size_t scheme = spec.endpoint->url.find("://");
    size_t path_start = scheme == std::string::npos ? spec.endpoint->url.find('/')
                                                    : spec.endpoint->url.find('/', scheme + 3);
    std::string origin = path_start == std::string::npos ? spec.endpoint->url
                                                         : spec.endpoint->url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : spec.endpoint->url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    client.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);

    httplib::Headers headers;
    for (const auto& [k, v] : spec.endpoint->headers) headers.emplace(k, substitute_env(v));

    httplib::Result res;
    if (spec.endpoint->method == "GET") {
        httplib::Params params;
        for (auto it = req.arguments.begin(); it != req.arguments.end(); ++it) {
            params.emplace(it.key(), it.value().is_string() ? it.value().get<std::string>()
                                                            : it.value().dump());
        }
        res = client.Get(httplib::append_query_params(path, params), headers);
    } else {
        res = client.Post(path, headers, req.arguments.dump(), "application/json");
    }

    resp.latency_ms = elapsed_ms();
    if (!res) {
        auto err = res.error();
        bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                         err == httplib::Error::Write;
        if (timed_out && resp.latency_ms >= timeout_ms) {
            resp.status = CallStatus::Timeout;
            resp.latency_ms = std::max<int64_t>(resp.latency_ms, timeout_ms);
            resp.body = Json{{"error", "request timed out"}};
        } else {
            resp.status = CallStatus::Error;
            resp.body = Json{{"error", httplib::to_string(err)}};
        }
        return resp;
    }

    Json body = Json::parse(res->body, nullptr, false);
    if (body.is_discarded()) body = Json{{"raw", res->body}};
    if (res->status >= 200 && res->status < 300) {
        resp.status = CallStatus::Success;
        resp.body = std::move(body);
    } else {
        resp.status = CallStatus::Error;
        resp.body = Json{{"error", "http status " + std::to_string(res->status)}, {"body", body}};
    }
    return resp;
}

}  // namespace

ToolResponse ToolEnv::execute(const ToolCallRequest& req, int timeout_ms, CostLedger* ledger) const {
    if (!registry_.has(req.api_id)) throw RegistryError("unknown api id: " + req.api_id);
    ToolResponse resp = simulated_ ? execute_sim(profile_, req, timeout_ms)
                                   : execute_live(registry_.get(req.api_id), req, timeout_ms);
    if (ledger) ledger->tool_calls += 1;
    return resp;
}

}  // namespace toolweave
