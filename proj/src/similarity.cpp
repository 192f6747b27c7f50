#include "divgen/similarity.hpp"

#include <cmath>
#include <fstream>

#include "divgen/rng.hpp"
#include "json.hpp"

namespace divgen::similarity {

EmbeddingVector normalize(const EmbeddingVector& v) {
    double sq = 0.0;
    for (double x : v.values) {
        if (!std::isfinite(x)) raise("NonFiniteValue", "embedding contains a non-finite entry");
        sq += x * x;
    }
    double norm = std::sqrt(sq);
    if (norm == 0.0 || !std::isfinite(norm) || !(norm > 0.0)) {
        raise("ZeroVector", "cannot normalize a zero or underflowing vector");
    }
    EmbeddingVector out;
    out.values.reserve(v.values.size());
    for (double x : v.values) out.values.push_back(x / norm);
    return out;
}

double mean_similarity(const EmbeddingVector& text_emb,
                       const std::vector<EmbeddingVector>& image_embs) {
    if (image_embs.empty()) raise("EmptyImageSet", "mean similarity needs at least one image");
    double sum = 0.0;
    for (const auto& img : image_embs) {
        if (img.dim() != text_emb.dim()) {
            raise("DimMismatch", "image dim " + std::to_string(img.dim()) +
                                     " vs text dim " + std::to_string(text_emb.dim()));
        }
        double dot = 0.0;
        for (size_t i = 0; i < img.values.size(); ++i) dot += img.values[i] * text_emb.values[i];
        sum += dot;
    }
    return sum / static_cast<double>(image_embs.size());
}

ResolvedMeaning resolve_ambiguity(const std::string& class_id,
                                  const std::vector<MeaningCandidate>& candidates,
                                  const std::vector<EmbeddingVector>& candidate_embs,
                                  const std::vector<EmbeddingVector>& image_embs) {
    if (candidates.empty()) raise("EmptyCandidates", "no meaning candidates for class " + class_id);
    if (candidates.size() != candidate_embs.size()) {
        raise("DimMismatch", "candidate list and embedding list sizes differ");
    }
    ResolvedMeaning out;
    out.class_id = class_id;
    out.all_scores.reserve(candidates.size());
    size_t best = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        double s = mean_similarity(candidate_embs[i], image_embs);
        out.all_scores.push_back(s);
        if (s > out.all_scores[best]) best = i;
    }
    out.chosen = candidates[best];
    out.score = out.all_scores[best];
    return out;
}

MockEmbeddingProvider::MockEmbeddingProvider(uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    if (dim <= 0) raise("InvalidDim", "embedding dim must be positive");
}

EmbeddingVector MockEmbeddingProvider::get(const std::string& key) const {
    // Standard-normal draws keyed by (seed, key), then normalized, so the
    // direction is uniform on the sphere and stable across calls.
    uint64_t h = fnv1a64(key, fnv1a64_u64(seed_));
    for (uint64_t salt = 0;; ++salt) {
        Rng rng(h + salt);
        EmbeddingVector v;
        v.values.reserve(static_cast<size_t>(dim_));
        for (int i = 0; i < dim_; ++i) v.values.push_back(rng.normal());
        double sq = 0.0;
        for (double x : v.values) sq += x * x;
        if (sq > 0.0) return normalize(v);
    }
}

FileEmbeddingStore FileEmbeddingStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise("StoreParseError", "cannot open embedding store: " + path);
    FileEmbeddingStore store;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j.contains("values") ||
            !j["key"].is_string() || !j["values"].is_array()) {
            raise("StoreParseError",
                  "bad record at line " + std::to_string(line_no) + " of " + path);
        }
        EmbeddingVector v;
        for (const auto& x : j["values"]) {
            if (!x.is_number()) {
                raise("StoreParseError",
                      "non-numeric value at line " + std::to_string(line_no) + " of " + path);
            }
            v.values.push_back(x.get<double>());
        }
        if (v.values.empty()) {
            raise("StoreParseError", "empty vector at line " + std::to_string(line_no));
        }
        if (store.dim_ == 0) {
            store.dim_ = v.dim();
        } else if (v.dim() != store.dim_) {
            raise("StoreParseError", "mixed dims at line " + std::to_string(line_no) + ": got " +
                                         std::to_string(v.dim()) + ", expected " +
                                         std::to_string(store.dim_));
        }
        store.store_[j["key"].get<std::string>()] = std::move(v);
    }
    return store;
}

EmbeddingVector FileEmbeddingStore::get(const std::string& key) const {
    auto it = store_.find(key);
    if (it == store_.end()) raise("KeyNotFound", "no embedding for key: " + key);
    return it->second;
}

} // namespace divgen::similarity
