#pragma once
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "divgen/error.hpp"

namespace divgen::similarity {

struct EmbeddingVector {
    std::vector<double> values;

    int dim() const { return static_cast<int>(values.size()); }
};

// One candidate meaning phrase for an ambiguous class name.
struct MeaningCandidate {
    std::string text;
    int index = 0;
};

struct ResolvedMeaning {
    std::string class_id;
    MeaningCandidate chosen;
    double score = 0.0;                // mean image-text similarity of the winner
    std::vector<double> all_scores;    // in candidate order
};

// Rescale to unit L2 norm. Throws ZeroVector when the input has no
// usable direction (all zeros, or the norm underflows).
EmbeddingVector normalize(const EmbeddingVector& v);

// Mean dot product between one text embedding and a set of image
// embeddings. Inputs are expected to be normalized already.
double mean_similarity(const EmbeddingVector& text_emb,
                       const std::vector<EmbeddingVector>& image_embs);

// Pick the candidate whose mean similarity against the class's image
// embeddings is highest; ties go to the smallest candidate index.
ResolvedMeaning resolve_ambiguity(const std::string& class_id,
                                  const std::vector<MeaningCandidate>& candidates,
                                  const std::vector<EmbeddingVector>& candidate_embs,
                                  const std::vector<EmbeddingVector>& image_embs);

// Provider contract standing in for the CLIP text/image encoders.
// Implementations must be deterministic: one key, one vector, forever.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector get(const std::string& key) const = 0;
    virtual int dim() const = 0;
};

// Unit-norm vector derived from a seeded hash of the key; a pure
// function of (seed, key).
class MockEmbeddingProvider : public EmbeddingProvider {
public:
    MockEmbeddingProvider(uint64_t seed, int dim);
    EmbeddingVector get(const std::string& key) const override;
    int dim() const override { return dim_; }

private:
    uint64_t seed_;
    int dim_;
};

// JSONL-backed store, loaded once then read-only. One object per line:
// {"key": string, "values": [number, ...]}. Mixed dims are rejected.
class FileEmbeddingStore : public EmbeddingProvider {
public:
    static FileEmbeddingStore load(const std::string& path);

    EmbeddingVector get(const std::string& key) const override;
    int dim() const override { return dim_; }
    size_t size() const { return store_.size(); }

private:
    std::unordered_map<std::string, EmbeddingVector> store_;
    int dim_ = 0;
};

} // namespace divgen::similarity
