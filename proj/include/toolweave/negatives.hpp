#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "toolweave/model.hpp"
#include "toolweave/toolenv.hpp"

namespace toolweave {

struct EmbeddingVector {
    std::vector<float> values;

    size_t dim() const { return values.size(); }
};

class EmbeddingIndex {
public:
    EmbeddingIndex(size_t dim, std::string provider_tag)
        : dim_(dim), provider_(std::move(provider_tag)) {}

    size_t dim() const { return dim_; }
    const std::string& provider() const { return provider_; }
    size_t size() const { return vectors_.size(); }

    // Rejects vectors whose dimension disagrees with the index.
    void insert(const std::string& api_id, EmbeddingVector v);
    bool has(const std::string& api_id) const { return vectors_.count(api_id) > 0; }
    const EmbeddingVector& get(const std::string& api_id) const;

    std::vector<std::string> missing_from(const Registry& reg) const;

    Json to_json() const;
    static EmbeddingIndex from_json(const Json& j);
    void save(const std::string& path) const;
    static EmbeddingIndex load(const std::string& path);

private:
    size_t dim_;
    std::string provider_;
    std::map<std::string, EmbeddingVector> vectors_;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(const ApiSpec& spec) = 0;
    virtual std::string tag() const = 0;
    virtual size_t dim() const = 0;
};

// Seeded random projection of character trigram counts; exists so the whole
// pipeline runs offline and deterministically.
class HashedLocalProvider : public EmbeddingProvider {
public:
    explicit HashedLocalProvider(uint64_t seed, size_t dim = 256) : seed_(seed), dim_(dim) {}

    EmbeddingVector embed(const ApiSpec& spec) override;
    std::string tag() const override { return "hashed-local"; }
    size_t dim() const override { return dim_; }

private:
    uint64_t seed_;
    size_t dim_;
};

// POST {base_url}/embeddings with {model, input}.
class RemoteEmbeddingProvider : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(std::string base_url, std::string model, std::string api_key_env,
                            size_t dim, int timeout_ms = 60000);

    EmbeddingVector embed(const ApiSpec& spec) override;
    std::string tag() const override { return "remote"; }
    size_t dim() const override { return dim_; }

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    size_t dim_;
    int timeout_ms_;
};

std::string embedding_text(const ApiSpec& spec);  // "name: description"

EmbeddingIndex build_index(const Registry& reg, EmbeddingProvider& provider);

// Standard cosine; throws on dimension mismatch or zero-norm input.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

enum class SimilarityAgg { Max, Mean };

struct ScoredCandidate {
    double score = 0.0;
    std::string id;
};

// Scores every candidate by its aggregated similarity to the positives.
// The parallel kernel is the production path; the serial one is kept as a
// reference for tests and the benchmark.
std::vector<ScoredCandidate> score_candidates_parallel(const EmbeddingIndex& index,
                                                       const std::vector<std::string>& positives,
                                                       const std::vector<std::string>& candidates,
                                                       SimilarityAgg agg = SimilarityAgg::Max);
std::vector<ScoredCandidate> score_candidates_serial(const EmbeddingIndex& index,
                                                     const std::vector<std::string>& positives,
                                                     const std::vector<std::string>& candidates,
                                                     SimilarityAgg agg = SimilarityAgg::Max);

// Exactly min(p - n, |registry| - n) ids disjoint from the positives, ranked
// by descending score with ties broken by ascending api_id. n > p is an error
// directing the caller to raise p.
std::vector<std::string> sample_negatives(const std::set<std::string>& positives,
                                          const Registry& reg, const EmbeddingIndex& index, int p,
                                          SimilarityAgg agg = SimilarityAgg::Max);

}  // namespace toolweave
