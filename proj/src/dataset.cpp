#include "divgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "divgen/rng.hpp"
#include "json.hpp"

namespace divgen::dataset {

namespace {

nlohmann::json entry_to_json(const ManifestEntry& e) {
    nlohmann::json j = {
        {"id", e.id},           {"path", e.path},     {"class_id", e.class_id},
        {"domain", domain_name(e.domain)}, {"format", e.format}, {"checksum", e.checksum},
    };
    if (e.provenance) {
        const Provenance& p = *e.provenance;
        j["provenance"] = {
            {"prompt_text", p.prompt_text},       {"kind", p.kind},   {"style", p.style},
            {"seed", p.seed}, {"guidance_scale", p.guidance_scale},   {"steps", p.steps},
        };
    }
    return j;
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.class_id = j.at("class_id").get<std::string>();
    std::string dom = j.at("domain").get<std::string>();
    if (dom == "real") {
        e.domain = Domain::Real;
    } else if (dom == "synthetic") {
        e.domain = Domain::Synthetic;
    } else {
        raise("ManifestParseError", "unknown domain: " + dom);
    }
    e.format = j.at("format").get<std::string>();
    e.checksum = j.at("checksum").get<std::string>();
    if (j.contains("provenance")) {
        const auto& pj = j["provenance"];
        Provenance p;
        p.prompt_text = pj.at("prompt_text").get<std::string>();
        p.kind = pj.at("kind").get<std::string>();
        p.style = pj.value("style", std::string{});
        p.seed = pj.at("seed").get<uint64_t>();
        p.guidance_scale = pj.at("guidance_scale").get<double>();
        p.steps = pj.at("steps").get<int>();
        e.provenance = std::move(p);
    }
    return e;
}

void check_entry(const ManifestEntry& e, const char* where) {
    if (e.domain == Domain::Synthetic && !e.provenance) {
        raise("InvalidEntry", std::string(where) + ": synthetic entry " + e.id +
                                  " is missing provenance");
    }
    if (e.domain == Domain::Real && e.provenance) {
        raise("InvalidEntry",
              std::string(where) + ": real entry " + e.id + " must not carry provenance");
    }
}

} // namespace

size_t write_manifest(const Manifest& entries, const std::filesystem::path& path) {
    std::unordered_set<std::string> ids;
    for (const auto& e : entries) {
        check_entry(e, "write_manifest");
        if (!ids.insert(e.id).second) raise("DuplicateId", "duplicate manifest id: " + e.id);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) raise("IoError", "cannot open manifest for writing: " + path.string());
    for (const auto& e : entries) out << entry_to_json(e).dump() << '\n';
    if (!out) raise("IoError", "manifest write failed: " + path.string());
    return entries.size();
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise("IoError", "cannot open manifest: " + path.string());
    Manifest entries;
    std::unordered_set<std::string> ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            raise("ManifestParseError", "line " + std::to_string(line_no) + ": not a JSON object");
        }
        ManifestEntry e;
        try {
            e = entry_from_json(j);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& ex) {
            raise("ManifestParseError",
                  "line " + std::to_string(line_no) + ": " + ex.what());
        }
        check_entry(e, ("line " + std::to_string(line_no)).c_str());
        if (!ids.insert(e.id).second) {
            raise("DuplicateId",
                  "line " + std::to_string(line_no) + ": duplicate id " + e.id);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

namespace {

// Stable per-class uniform pick: marks which positions of `positions`
// survive, choosing k of them without replacement.
std::vector<size_t> pick_without_replacement(const std::vector<size_t>& positions, size_t k,
                                             Rng& rng) {
    std::vector<size_t> pool = positions;
    rng.shuffle(pool);
    pool.resize(std::min(k, pool.size()));
    return pool;
}

} // namespace

Manifest subsample_low_data(const Manifest& manifest, int n_per_class, uint64_t seed) {
    if (n_per_class < 1) raise("InvalidCount", "n_per_class must be >= 1");

    std::map<std::string, std::vector<size_t>> by_class; // ordered for determinism
    for (size_t i = 0; i < manifest.size(); ++i) {
        if (manifest[i].domain == Domain::Real) by_class[manifest[i].class_id].push_back(i);
    }

    std::vector<char> keep(manifest.size(), 0);
    for (const auto& [class_id, positions] : by_class) {
        Rng rng(fnv1a64(class_id, fnv1a64_u64(seed)));
        for (size_t p : pick_without_replacement(positions, static_cast<size_t>(n_per_class), rng)) {
            keep[p] = 1;
        }
    }

    Manifest out;
    for (size_t i = 0; i < manifest.size(); ++i) {
        if (keep[i]) out.push_back(manifest[i]);
    }
    return out;
}

std::vector<long long> long_tail_counts(int num_classes, int n1, double gamma) {
    if (num_classes < 2) raise("TooFewClasses", "long-tail subsampling needs at least 2 classes");
    if (!(gamma > 1.0)) raise("InvalidGamma", "imbalance ratio gamma must be > 1");
    if (n1 < 1) raise("InvalidCount", "n1 must be >= 1");
    std::vector<long long> counts;
    counts.reserve(static_cast<size_t>(num_classes));
    for (int k = 1; k <= num_classes; ++k) {
        double exponent = -static_cast<double>(k - 1) / static_cast<double>(num_classes - 1);
        double target = static_cast<double>(n1) * std::pow(gamma, exponent);
        counts.push_back(std::max(1LL, static_cast<long long>(std::floor(target))));
    }
    return counts;
}

Manifest subsample_long_tail(const Manifest& manifest, double gamma, int n1, uint64_t seed) {
    std::map<std::string, std::vector<size_t>> by_class;
    for (size_t i = 0; i < manifest.size(); ++i) {
        if (manifest[i].domain == Domain::Real) by_class[manifest[i].class_id].push_back(i);
    }
    int num_classes = static_cast<int>(by_class.size());
    if (num_classes < 2) raise("TooFewClasses", "long-tail subsampling needs at least 2 classes");

    std::vector<long long> counts = long_tail_counts(num_classes, n1, gamma);

    // Seeded permutation assigns each class its rank.
    std::vector<std::string> classes;
    classes.reserve(by_class.size());
    for (const auto& [class_id, _] : by_class) classes.push_back(class_id);
    Rng perm_rng(fnv1a64_u64(seed));
    perm_rng.shuffle(classes);

    std::vector<char> keep(manifest.size(), 0);
    for (int k = 0; k < num_classes; ++k) {
        const std::string& class_id = classes[static_cast<size_t>(k)];
        const auto& positions = by_class[class_id];
        size_t want = std::min(static_cast<size_t>(counts[static_cast<size_t>(k)]),
                               positions.size());
        want = std::max<size_t>(want, 1);
        Rng rng(fnv1a64(class_id, fnv1a64_u64(seed ^ 0x6c74ULL)));
        for (size_t p : pick_without_replacement(positions, want, rng)) keep[p] = 1;
    }

    Manifest out;
    for (size_t i = 0; i < manifest.size(); ++i) {
        if (keep[i]) out.push_back(manifest[i]);
    }
    return out;
}

ShotBucket bucket_for_count(int count) {
    if (count < 0) raise("InvalidCount", "class counts cannot be negative");
    if (count > 800) return ShotBucket::Many;
    if (count >= 300) return ShotBucket::Medium;
    return ShotBucket::Few;
}

std::map<std::string, ShotBucket> shot_buckets(const std::map<std::string, int>& real_counts) {
    std::map<std::string, ShotBucket> out;
    for (const auto& [class_id, count] : real_counts) out[class_id] = bucket_for_count(count);
    return out;
}

BatchPlan BatchPlan::make(int batch_size, double sampling_weight, uint64_t seed) {
    if (batch_size < 1) raise("InvalidBatchSize", "batch size must be >= 1");
    if (!(sampling_weight >= 0.0 && sampling_weight <= 1.0)) {
        raise("InvalidSamplingWeight", "sampling weight must lie in [0, 1]");
    }
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.sampling_weight = sampling_weight;
    plan.n_syn_per_batch =
        static_cast<int>(std::floor(sampling_weight * static_cast<double>(batch_size) + 0.5));
    plan.seed = seed;
    return plan;
}

std::vector<IndexBatch> compose_index_batches(size_t n_real, size_t n_syn_pool,
                                              const BatchPlan& plan, int epoch) {
    int n_syn = plan.n_syn_per_batch;
    int n_real_per_batch = plan.batch_size - n_syn;
    if (n_syn > 0 && n_syn_pool == 0) {
        raise("EmptySyntheticPool", "plan asks for synthetic samples but the pool is empty");
    }
    if (n_real_per_batch > 0 && n_real == 0) {
        raise("EmptyRealPool", "plan asks for real samples but the pool is empty");
    }

    size_t num_batches = n_real_per_batch > 0
                             ? n_real / static_cast<size_t>(n_real_per_batch)
                             : (n_syn > 0 ? n_syn_pool / static_cast<size_t>(n_syn) : 0);

    std::vector<size_t> real_order(n_real);
    for (size_t i = 0; i < n_real; ++i) real_order[i] = i;
    Rng real_rng(fnv1a64_u64(static_cast<uint64_t>(epoch), fnv1a64("real", fnv1a64_u64(plan.seed))));
    real_rng.shuffle(real_order);

    Rng syn_rng(fnv1a64_u64(static_cast<uint64_t>(epoch), fnv1a64("syn", fnv1a64_u64(plan.seed))));
    std::vector<size_t> syn_order(n_syn_pool);
    for (size_t i = 0; i < n_syn_pool; ++i) syn_order[i] = i;
    if (n_syn > 0) syn_rng.shuffle(syn_order);
    size_t syn_cursor = 0;

    std::vector<IndexBatch> batches;
    batches.reserve(num_batches);
    for (size_t b = 0; b < num_batches; ++b) {
        IndexBatch batch;
        batch.real.reserve(static_cast<size_t>(n_real_per_batch));
        for (int i = 0; i < n_real_per_batch; ++i) {
            batch.real.push_back(real_order[b * static_cast<size_t>(n_real_per_batch) +
                                            static_cast<size_t>(i)]);
        }
        batch.synthetic.reserve(static_cast<size_t>(n_syn));
        for (int i = 0; i < n_syn; ++i) {
            if (syn_cursor == syn_order.size()) {
                syn_rng.shuffle(syn_order);
                syn_cursor = 0;
            }
            batch.synthetic.push_back(syn_order[syn_cursor++]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::vector<std::vector<ManifestEntry>> compose_batches(const Manifest& real,
                                                        const Manifest& synthetic,
                                                        const BatchPlan& plan, int epochs) {
    if (real.empty()) raise("EmptyRealPool", "real manifest is empty");
    std::vector<std::vector<ManifestEntry>> out;
    for (int e = 0; e < epochs; ++e) {
        for (const auto& ib : compose_index_batches(real.size(), synthetic.size(), plan, e)) {
            std::vector<ManifestEntry> batch;
            batch.reserve(ib.real.size() + ib.synthetic.size());
            for (size_t i : ib.real) batch.push_back(real[i]);
            for (size_t i : ib.synthetic) batch.push_back(synthetic[i]);
            out.push_back(std::move(batch));
        }
    }
    return out;
}

TwoDomainToy make_two_domain_toy(uint64_t seed, int n_per_class_per_domain, int classes,
                                 double shift, double scale) {
    if (classes < 2) raise("TooFewClasses", "toy data needs at least 2 classes");
    if (n_per_class_per_domain < 1) raise("InvalidCount", "need at least 1 sample per class");

    const double two_pi = 2.0 * 3.14159265358979323846;
    TwoDomainToy toy;
    toy.real.x = Mat(n_per_class_per_domain * classes, 2);
    toy.synthetic.x = Mat(n_per_class_per_domain * classes, 2);
    toy.real.labels.reserve(toy.real.x.rows);
    toy.synthetic.labels.reserve(toy.synthetic.x.rows);

    int row = 0;
    for (int c = 0; c < classes; ++c) {
        double angle = two_pi * static_cast<double>(c) / static_cast<double>(classes);
        double mx = 4.0 * std::cos(angle);
        double my = 4.0 * std::sin(angle);
        Rng real_rng(fnv1a64_u64(static_cast<uint64_t>(c), fnv1a64("toy-real", fnv1a64_u64(seed))));
        Rng syn_rng(fnv1a64_u64(static_cast<uint64_t>(c), fnv1a64("toy-syn", fnv1a64_u64(seed))));
        for (int i = 0; i < n_per_class_per_domain; ++i, ++row) {
            toy.real.x.at(row, 0) = mx + real_rng.normal();
            toy.real.x.at(row, 1) = my + real_rng.normal();
            toy.real.labels.push_back(c);
            // Same blob displaced along +x and scaled, noise included.
            toy.synthetic.x.at(row, 0) = scale * (mx + shift + syn_rng.normal());
            toy.synthetic.x.at(row, 1) = scale * (my + syn_rng.normal());
            toy.synthetic.labels.push_back(c);
        }
    }
    return toy;
}

void write_toy_csv(const TwoDomainToy& toy, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) raise("IoError", "cannot open csv for writing: " + path.string());
    out << "x1,x2,label,domain\n";
    auto dump = [&](const ToySet& set, const char* domain) {
        for (int i = 0; i < set.x.rows; ++i) {
            out << set.x.at(i, 0) << ',' << set.x.at(i, 1) << ',' << set.labels[static_cast<size_t>(i)]
                << ',' << domain << '\n';
        }
    };
    dump(toy.real, "real");
    dump(toy.synthetic, "synthetic");
    if (!out) raise("IoError", "csv write failed: " + path.string());
}

} // namespace divgen::dataset
