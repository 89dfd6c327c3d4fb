#include "toolweave/negatives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <httplib.h>

namespace toolweave {

void EmbeddingIndex::insert(const std::string& api_id, EmbeddingVector v) {
    if (v.dim() != dim_) {
        throw std::invalid_argument("embedding dim mismatch for '" + api_id + "': got " +
                                    std::to_string(v.dim()) + ", index holds " + std::to_string(dim_));
    }
    vectors_[api_id] = std::move(v);
}

const EmbeddingVector& EmbeddingIndex::get(const std::string& api_id) const {
    auto it = vectors_.find(api_id);
    if (it == vectors_.end()) throw std::out_of_range("no embedding for api id: " + api_id);
    return it->second;
}

std::vector<std::string> EmbeddingIndex::missing_from(const Registry& reg) const {
    std::vector<std::string> missing;
    for (const auto& id : reg.sorted_ids()) {
        if (!vectors_.count(id)) missing.push_back(id);
    }
    return missing;
}

Json EmbeddingIndex::to_json() const {
    Json vecs = Json::object();
    for (const auto& [id, v] : vectors_) vecs[id] = v.values;
    return Json{{"dim", dim_}, {"provider", provider_}, {"vectors", vecs}};
}

EmbeddingIndex EmbeddingIndex::from_json(const Json& j) {
    EmbeddingIndex idx(j.at("dim").get<size_t>(), j.value("provider", std::string{"unknown"}));
    for (auto it = j.at("vectors").begin(); it != j.at("vectors").end(); ++it) {
        idx.insert(it.key(), EmbeddingVector{it.value().get<std::vector<float>>()});
    }
    return idx;
}

void EmbeddingIndex::save(const std::string& path) const { write_text_file(path, to_json().dump()); }

EmbeddingIndex EmbeddingIndex::load(const std::string& path) {
    Json doc = Json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error(path + ": embedding index is not valid JSON");
    return from_json(doc);
}

std::string embedding_text(const ApiSpec& spec) { return spec.name + ": " + spec.description; }

EmbeddingVector HashedLocalProvider::embed(const ApiSpec& spec) {
    if (trim(spec.name).empty()) throw std::invalid_argument("cannot embed api with empty name");
    std::string text = embedding_text(spec);

    std::vector<double> acc(dim_, 0.0);
    auto add_gram = [&](std::string_view gram) {
        uint64_t h = mix64(seed_, fnv1a64(gram));
        // Sparse projection: each gram touches four signed coordinates.
        for (uint64_t k = 0; k < 4; ++k) {
            uint64_t hk = splitmix64(h ^ k);
            size_t slot = static_cast<size_t>(hk % dim_);
            double sign = ((hk >> 32) & 1) ? 1.0 : -1.0;
            acc[slot] += sign;
        }
    };

    if (text.size() < 3) {
        add_gram(text);
    } else {
        for (size_t i = 0; i + 3 <= text.size(); ++i) add_gram(std::string_view(text).substr(i, 3));
    }

    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    EmbeddingVector out;
    out.values.resize(dim_);
    if (norm == 0.0) {
        out.values[fnv1a64(text) % dim_] = 1.0f;
        return out;
    }
    for (size_t i = 0; i < dim_; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
    return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string base_url, std::string model,
                                                 std::string api_key_env, size_t dim, int timeout_ms)
    : base_url_(std::move(base_url)), model_(std::move(model)), dim_(dim), timeout_ms_(timeout_ms) {
    if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
}

EmbeddingVector RemoteEmbeddingProvider::embed(const ApiSpec& spec) {
    size_t scheme = base_url_.find("://");
    size_t path_start = scheme == std::string::npos ? base_url_.find('/')
                                                    : base_url_.find('/', scheme + 3);
    std::string origin = path_start == std::string::npos ? base_url_ : base_url_.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);

    Json body{{"model", model_}, {"input", Json::array({embedding_text(spec)})}};

    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        httplib::Client client(origin);
        client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
        if (!res || res->status >= 500) {
            last_error = res ? "status " + std::to_string(res->status) : httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            throw GatewayError("embeddings request failed with status " + std::to_string(res->status));
        }
        Json doc = Json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("data") || doc.at("data").empty()) {
            throw GatewayError("malformed embeddings response");
        }
        EmbeddingVector v{doc.at("data").at(0).at("embedding").get<std::vector<float>>()};
        if (v.dim() != dim_) {
            throw GatewayError("embeddings endpoint returned dim " + std::to_string(v.dim()) +
                               ", expected " + std::to_string(dim_));
        }
        return v;
    }
    throw GatewayError("embeddings request failed after retries: " + last_error);
}

EmbeddingIndex build_index(const Registry& reg, EmbeddingProvider& provider) {
    EmbeddingIndex index(provider.dim(), provider.tag());
    for (const auto& id : reg.sorted_ids()) index.insert(id, provider.embed(reg.get(id)));
    return index;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("cosine: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                                    std::to_string(b.dim()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.dim(); ++i) {
        double x = a.values[i], y = b.values[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

double aggregate_score(const EmbeddingIndex& index, const std::vector<const EmbeddingVector*>& pos,
                       const std::string& candidate, SimilarityAgg agg) {
    const EmbeddingVector& cv = index.get(candidate);
    double best = -2.0, sum = 0.0;
    for (const EmbeddingVector* pv : pos) {
        double s = cosine(cv, *pv);
        best = std::max(best, s);
        sum += s;
    }
    return agg == SimilarityAgg::Max ? best : sum / static_cast<double>(pos.size());
}

std::vector<const EmbeddingVector*> positive_vectors(const EmbeddingIndex& index,
                                                     const std::vector<std::string>& positives) {
    std::vector<const EmbeddingVector*> out;
    out.reserve(positives.size());
    for (const auto& id : positives) out.push_back(&index.get(id));
    return out;
}

}  // namespace

std::vector<ScoredCandidate> score_candidates_parallel(const EmbeddingIndex& index,
                                                       const std::vector<std::string>& positives,
                                                       const std::vector<std::string>& candidates,
                                                       SimilarityAgg agg) {
    auto pos = positive_vectors(index, positives);
    std::vector<ScoredCandidate> out(candidates.size());
    const int64_t n = static_cast<int64_t>(candidates.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        size_t u = static_cast<size_t>(i);
        out[u] = ScoredCandidate{aggregate_score(index, pos, candidates[u], agg), candidates[u]};
    }
    return out;
}

std::vector<ScoredCandidate> score_candidates_serial(const EmbeddingIndex& index,
                                                     const std::vector<std::string>& positives,
                                                     const std::vector<std::string>& candidates,
                                                     SimilarityAgg agg) {
    auto pos = positive_vectors(index, positives);
    std::vector<ScoredCandidate> out;
    out.reserve(candidates.size());
    for (const auto& id : candidates) {
        out.push_back(ScoredCandidate{aggregate_score(index, pos, id, agg), id});
    }
    return out;
}

std::vector<std::string> sample_negatives(const std::set<std::string>& positives, const Registry& reg,
                                          const EmbeddingIndex& index, int p, SimilarityAgg agg) {
    size_t n = positives.size();
    if (n > static_cast<size_t>(p)) {
        throw std::invalid_argument("sample_negatives: " + std::to_string(n) + " positives exceed p=" +
                                    std::to_string(p) + "; raise p");
    }
    size_t slots = static_cast<size_t>(p) - n;
    if (slots == 0) return {};

    std::vector<std::string> pos(positives.begin(), positives.end());
    std::vector<std::string> candidates;
    candidates.reserve(reg.size());
    for (const auto& id : reg.sorted_ids()) {
        if (!positives.count(id)) candidates.push_back(id);
    }
    if (candidates.empty() || pos.empty()) return {};

    auto scored = score_candidates_parallel(index, pos, candidates, agg);
    std::sort(scored.begin(), scored.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });

    size_t take = std::min(slots, scored.size());
    std::vector<std::string> out;
    out.reserve(take);
    for (size_t i = 0; i < take; ++i) out.push_back(scored[i].id);
    return out;
}

}  // namespace toolweave
