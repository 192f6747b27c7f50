#include "divgen/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "divgen/base64.hpp"
#include "divgen/rng.hpp"
#include "httplib.h"
#include "json.hpp"

namespace divgen::generation {

namespace {

uint64_t job_seed(uint64_t seed_base, const std::string& class_id, promptgen::PromptKind kind,
                  int index) {
    uint64_t h = fnv1a64_u64(seed_base);
    h = fnv1a64(class_id, h);
    h = fnv1a64(promptgen::kind_name(kind), h);
    h = fnv1a64_u64(static_cast<uint64_t>(index), h);
    return h;
}

void validate_job(const GenerationJob& job) {
    if (!(job.guidance_scale > 0.0)) raise("InvalidJob", "guidance_scale must be > 0");
    if (job.steps < 1) raise("InvalidJob", "steps must be >= 1");
    if (job.width != job.height) raise("InvalidJob", "jobs are square: width must equal height");
    if (job.width < 1 || job.target_resolution < 1 || job.width % job.target_resolution != 0) {
        raise("InvalidJob", "target_resolution must divide width");
    }
}

} // namespace

std::vector<GenerationJob> plan_jobs(const std::string& class_id,
                                     const promptgen::PromptCorpus& corpus, int quota,
                                     uint64_t seed_base, const JobParams& params) {
    if (quota < 1) raise("InvalidCount", "quota must be >= 1");
    if (corpus.cd_prompts.empty()) raise("EmptyCorpus", "corpus holds no CD prompts");
    if (corpus.styles.empty()) raise("EmptyCorpus", "corpus holds no styles");

    int n_cd = (quota + 1) / 2; // odd quotas favor CD by one
    int n_sd = quota / 2;

    std::vector<GenerationJob> jobs;
    jobs.reserve(static_cast<size_t>(quota));
    auto base_job = [&](promptgen::PromptKind kind, int index) {
        GenerationJob job;
        job.class_id = class_id;
        job.index = index;
        job.job_id = class_id + "/" + promptgen::kind_name(kind) + "/" + std::to_string(index);
        job.seed = job_seed(seed_base, class_id, kind, index);
        job.guidance_scale = params.guidance_scale;
        job.steps = params.steps;
        job.width = params.width;
        job.height = params.width;
        job.target_resolution = params.target_resolution;
        return job;
    };

    const size_t n_prompts = corpus.cd_prompts.size();
    for (int i = 0; i < n_cd; ++i) {
        GenerationJob job = base_job(promptgen::PromptKind::CD, i);
        job.prompt = corpus.cd_prompts[static_cast<size_t>(i) % n_prompts];
        validate_job(job);
        jobs.push_back(std::move(job));
    }
    const size_t n_styles = corpus.styles.size();
    const size_t n_pairs = n_prompts * n_styles;
    for (int i = 0; i < n_sd; ++i) {
        GenerationJob job = base_job(promptgen::PromptKind::SD, i);
        size_t pair = static_cast<size_t>(i) % n_pairs;
        const auto& cd = corpus.cd_prompts[pair / n_styles];
        const auto& style = corpus.styles[pair % n_styles];
        job.prompt = promptgen::apply_style(cd, style);
        validate_job(job);
        jobs.push_back(std::move(job));
    }
    return jobs;
}

RasterImage stub_generate(const GenerationJob& job) {
    RasterImage img;
    img.width = job.width;
    img.height = job.height;
    size_t bytes = img.pixel_count() * 3;
    img.pixels.resize(bytes);
    uint64_t state = fnv1a64_u64(static_cast<uint64_t>(job.width),
                                 fnv1a64_u64(static_cast<uint64_t>(job.height),
                                             fnv1a64_u64(job.seed)));
    size_t i = 0;
    while (i + 8 <= bytes) {
        uint64_t v = splitmix64(state);
        for (int b = 0; b < 8; ++b) img.pixels[i++] = static_cast<uint8_t>(v >> (8 * b));
    }
    if (i < bytes) {
        uint64_t v = splitmix64(state);
        for (int b = 0; i < bytes; ++b) img.pixels[i++] = static_cast<uint8_t>(v >> (8 * b));
    }
    return img;
}

GenResult StubBackend::generate(const GenerationJob& job) {
    GenResult r;
    r.raster = stub_generate(job);
    r.format = "ppm";
    return r;
}

RasterImage downsample_box(const RasterImage& img, int factor) {
    if (factor < 1) raise("NonDivisibleFactor", "factor must be >= 1");
    if (img.width % factor != 0 || img.height % factor != 0) {
        raise("NonDivisibleFactor", "factor " + std::to_string(factor) +
                                        " does not divide " + std::to_string(img.width) + "x" +
                                        std::to_string(img.height));
    }
    RasterImage out;
    out.width = img.width / factor;
    out.height = img.height / factor;
    out.pixels.resize(out.pixel_count() * 3);
    const uint64_t block = static_cast<uint64_t>(factor) * static_cast<uint64_t>(factor);
    for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
            uint64_t sum[3] = {0, 0, 0};
            for (int dy = 0; dy < factor; ++dy) {
                const size_t row = (static_cast<size_t>(oy) * factor + dy) * img.width;
                for (int dx = 0; dx < factor; ++dx) {
                    const size_t p = (row + static_cast<size_t>(ox) * factor + dx) * 3;
                    sum[0] += img.pixels[p];
                    sum[1] += img.pixels[p + 1];
                    sum[2] += img.pixels[p + 2];
                }
            }
            const size_t o = (static_cast<size_t>(oy) * out.width + ox) * 3;
            for (int c = 0; c < 3; ++c) {
                // mean rounded half-up: floor((2*sum + block) / (2*block))
                out.pixels[o + c] = static_cast<uint8_t>((2 * sum[c] + block) / (2 * block));
            }
        }
    }
    return out;
}

std::vector<uint8_t> encode_ppm(const RasterImage& img) {
    std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

// ── HTTP backend ─────────────────────────────────────────────────────

std::string build_generate_request(const GenerationJob& job) {
    nlohmann::json body = {
        {"prompt", job.prompt.text},
        {"guidance_scale", job.guidance_scale},
        {"num_inference_steps", job.steps},
        {"width", job.width},
        {"height", job.height},
        {"seed", job.seed},
    };
    return body.dump();
}

GenResult parse_generate_response(const std::string& body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("image_b64") || !j.contains("format") ||
        !j["image_b64"].is_string() || !j["format"].is_string()) {
        raise("BackendResponseInvalid", "generate response needs image_b64 and format");
    }
    GenResult r;
    r.encoded = base64_decode(j["image_b64"].get<std::string>());
    r.format = j["format"].get<std::string>();
    if (r.encoded.empty()) raise("BackendResponseInvalid", "empty image payload");
    return r;
}

HttpGenBackend::HttpGenBackend(GenHttpConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) raise("InvalidConfig", "http backend needs a base_url");
}

GenResult HttpGenBackend::generate(const GenerationJob& job) {
    httplib::Client cli(config_.base_url);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(300);
    httplib::Headers headers;
    if (const char* key = std::getenv("DIVGEN_GEN_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = cli.Post("/generate", headers, build_generate_request(job), "application/json");
    if (!res || res->status != 200) {
        raise("BackendUnavailable",
              res ? "status " + std::to_string(res->status)
                  : "transport: " + httplib::to_string(res.error()));
    }
    return parse_generate_response(res->body);
}

// ── Executor ─────────────────────────────────────────────────────────

namespace {

struct SlotResult {
    bool ok = false;
    std::string error;
    int attempts = 0;
    dataset::ManifestEntry entry;
};

dataset::ManifestEntry persist(const GenerationJob& job, GenResult result,
                               const std::filesystem::path& out_dir) {
    std::vector<uint8_t> bytes;
    std::string format;
    if (result.is_raster()) {
        int factor = job.width / job.target_resolution;
        RasterImage small = factor > 1 ? downsample_box(result.raster, factor) : result.raster;
        bytes = encode_ppm(small);
        format = "ppm";
    } else {
        bytes = std::move(result.encoded);
        format = result.format;
    }

    std::string rel = job.class_id + "/" + promptgen::kind_name(job.prompt.kind) + "/" +
                      std::to_string(job.index) + "." + format;
    std::filesystem::path full = out_dir / rel;
    std::filesystem::create_directories(full.parent_path());
    {
        std::ofstream out(full, std::ios::binary);
        if (!out) raise("IoError", "cannot open " + full.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) raise("IoError", "write failed: " + full.string());
    }

    dataset::ManifestEntry e;
    e.id = job.job_id;
    e.path = rel;
    e.class_id = job.class_id;
    e.domain = dataset::Domain::Synthetic;
    e.format = format;
    e.checksum = to_hex64(fnv1a64_bytes(bytes.data(), bytes.size()));
    dataset::Provenance prov;
    prov.prompt_text = job.prompt.text;
    prov.kind = promptgen::kind_name(job.prompt.kind);
    prov.style = job.prompt.style;
    prov.seed = job.seed;
    prov.guidance_scale = job.guidance_scale;
    prov.steps = job.steps;
    e.provenance = std::move(prov);
    return e;
}

} // namespace

dataset::Manifest execute(const std::vector<GenerationJob>& jobs, GenBackend& backend,
                          const std::filesystem::path& out_dir,
                          const dataset::Manifest& existing) {
    std::unordered_set<std::string> done;
    for (const auto& e : existing) done.insert(e.id);

    std::vector<size_t> pending; // indices into jobs
    std::vector<JobOutcome> outcomes(jobs.size());
    for (size_t i = 0; i < jobs.size(); ++i) {
        outcomes[i].job_id = jobs[i].job_id;
        if (done.count(jobs[i].job_id)) {
            outcomes[i].ok = true;
            outcomes[i].skipped = true;
        } else {
            pending.push_back(i);
        }
    }

    const RetryPolicy policy = backend.retry();
    const int workers =
        std::max(1, std::min<int>(backend.max_concurrency(), static_cast<int>(pending.size())));

    std::vector<SlotResult> slots(jobs.size());
    std::atomic<size_t> next{0};
    auto run_worker = [&]() {
        for (;;) {
            size_t p = next.fetch_add(1);
            if (p >= pending.size()) return;
            size_t idx = pending[p];
            const GenerationJob& job = jobs[idx];
            SlotResult& slot = slots[idx];
            for (int attempt = 0; attempt < std::max(1, policy.max_attempts); ++attempt) {
                slot.attempts = attempt + 1;
                try {
                    GenResult result = backend.generate(job);
                    slot.entry = persist(job, std::move(result), out_dir);
                    slot.ok = true;
                    break;
                } catch (const Error& err) {
                    slot.error = err.code();
                } catch (const std::exception& ex) {
                    slot.error = ex.what();
                }
                if (attempt + 1 < std::max(1, policy.max_attempts)) {
                    std::this_thread::sleep_for(policy.base_delay * (1LL << attempt));
                }
            }
        }
    };

    if (!pending.empty()) {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(run_worker);
        for (auto& t : pool) t.join();
    }

    // Assemble in job order; completion order never shows.
    dataset::Manifest entries;
    int failed = 0;
    for (size_t i = 0; i < jobs.size(); ++i) {
        if (outcomes[i].skipped) continue;
        outcomes[i].ok = slots[i].ok;
        outcomes[i].attempts = slots[i].attempts;
        outcomes[i].error = slots[i].error;
        if (slots[i].ok) {
            entries.push_back(std::move(slots[i].entry));
        } else {
            ++failed;
        }
    }
    if (failed > 0) throw PartialFailureError(std::move(outcomes), std::move(entries), failed);
    return entries;
}

} // namespace divgen::generation
