#pragma once
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "divgen/error.hpp"
#include "divgen/mat.hpp"

namespace divgen::dataset {

enum class Domain { Real, Synthetic };

inline const char* domain_name(Domain d) { return d == Domain::Real ? "real" : "synthetic"; }

// Generation provenance carried by every synthetic entry.
struct Provenance {
    std::string prompt_text;
    std::string kind;  // "cd" | "sd"
    std::string style; // empty for cd
    uint64_t seed = 0;
    double guidance_scale = 0.0;
    int steps = 0;
};

struct ManifestEntry {
    std::string id;
    std::string path;
    std::string class_id;
    Domain domain = Domain::Real;
    std::string format;
    std::string checksum; // hex FNV-1a 64 of the file bytes
    std::optional<Provenance> provenance;
};

using Manifest = std::vector<ManifestEntry>;

// JSONL, one entry per line. Returns the number of entries written.
size_t write_manifest(const Manifest& entries, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// Uniform per-class subsample of the real entries; classes with fewer
// than n_per_class entries keep everything.
Manifest subsample_low_data(const Manifest& manifest, int n_per_class, uint64_t seed);

// Exponential imbalance: the class ranked k (by a seeded permutation)
// keeps floor(n1 * gamma^(-(k-1)/(K-1))) entries, clamped to
// [1, available].
Manifest subsample_long_tail(const Manifest& manifest, double gamma, int n1, uint64_t seed);

// Target count per rank before the availability clamp (>= 1 always).
std::vector<long long> long_tail_counts(int num_classes, int n1, double gamma);

enum class ShotBucket { Many, Medium, Few };

inline const char* bucket_name(ShotBucket b) {
    switch (b) {
        case ShotBucket::Many: return "many";
        case ShotBucket::Medium: return "medium";
        default: return "few";
    }
}

// many > 800, medium in [300, 800], few < 300.
ShotBucket bucket_for_count(int count);
std::map<std::string, ShotBucket> shot_buckets(const std::map<std::string, int>& real_counts);

struct BatchPlan {
    int batch_size = 64;
    double sampling_weight = 0.5; // fraction of synthetic samples per batch
    int n_syn_per_batch = 32;
    uint64_t seed = 0;

    // n_syn = round-half-up(w * B).
    static BatchPlan make(int batch_size, double sampling_weight, uint64_t seed);
};

// One batch as index lists into the real and synthetic pools.
struct IndexBatch {
    std::vector<size_t> real;
    std::vector<size_t> synthetic;
};

// Deterministic batch composition for one epoch: real indices drawn
// without replacement (reshuffled per epoch), synthetic indices drawn
// from an independently reshuffled cycling order.
std::vector<IndexBatch> compose_index_batches(size_t n_real, size_t n_syn_pool,
                                              const BatchPlan& plan, int epoch);

// Manifest-level batches across `epochs` epochs, in epoch order.
std::vector<std::vector<ManifestEntry>> compose_batches(const Manifest& real,
                                                        const Manifest& synthetic,
                                                        const BatchPlan& plan, int epochs);

// ── Two-domain toy data ──────────────────────────────────────────────

struct ToySet {
    Mat x; // N x 2
    std::vector<int> labels;
};

struct TwoDomainToy {
    ToySet real;
    ToySet synthetic;
};

// Gaussian blobs on a circle of radius 4; the synthetic domain shifts
// every class mean by `shift` along +x and scales all features by
// `scale`. shift=0, scale=1 makes the domains identically distributed.
TwoDomainToy make_two_domain_toy(uint64_t seed, int n_per_class_per_domain, int classes,
                                 double shift, double scale);

// CSV rows: x1,x2,label,domain
void write_toy_csv(const TwoDomainToy& toy, const std::filesystem::path& path);

} // namespace divgen::dataset
