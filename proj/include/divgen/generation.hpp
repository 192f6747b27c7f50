#pragma once
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "divgen/dataset.hpp"
#include "divgen/error.hpp"
#include "divgen/prompt_engine.hpp"

namespace divgen::generation {

struct GenerationJob {
    std::string job_id;   // "{class_id}/{kind}/{index}"
    std::string class_id;
    int index = 0;
    promptgen::GenerationPrompt prompt;
    uint64_t seed = 0;
    double guidance_scale = 2.0;
    int steps = 50;
    int width = 1024;
    int height = 1024;
    int target_resolution = 256;
};

// Generation parameters shared by a planning run; defaults follow the
// pipeline's standard settings (guidance 2.0, 50 steps, 1024 -> 256).
struct JobParams {
    double guidance_scale = 2.0;
    int steps = 50;
    int width = 1024;
    int target_resolution = 256;
};

struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels; // row-major RGB, 8-bit

    size_t pixel_count() const { return static_cast<size_t>(width) * static_cast<size_t>(height); }
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{10};
};

// What a backend hands back: either a raw raster (stub) that the
// executor downsamples and encodes, or an already-encoded payload
// (HTTP) stored verbatim.
struct GenResult {
    RasterImage raster;
    std::vector<uint8_t> encoded;
    std::string format; // "ppm" for rasters, backend-reported otherwise

    bool is_raster() const { return encoded.empty(); }
};

class GenBackend {
public:
    virtual ~GenBackend() = default;
    virtual GenResult generate(const GenerationJob& job) = 0;
    virtual int max_concurrency() const { return 1; }
    virtual RetryPolicy retry() const { return {}; }
};

// Pure function of (seed, width, height); never fails.
class StubBackend : public GenBackend {
public:
    explicit StubBackend(int max_concurrency = 1) : max_concurrency_(max_concurrency) {}
    GenResult generate(const GenerationJob& job) override;
    int max_concurrency() const override { return max_concurrency_; }

private:
    int max_concurrency_;
};

struct GenHttpConfig {
    std::string base_url;
    int max_concurrency = 4;
    RetryPolicy retry_policy;
};

// POST {base_url}/generate with {prompt, guidance_scale,
// num_inference_steps, width, height, seed}; expects
// {image_b64, format}. Bearer token from DIVGEN_GEN_KEY when set.
class HttpGenBackend : public GenBackend {
public:
    explicit HttpGenBackend(GenHttpConfig config);
    GenResult generate(const GenerationJob& job) override;
    int max_concurrency() const override { return config_.max_concurrency; }
    RetryPolicy retry() const override { return config_.retry_policy; }

private:
    GenHttpConfig config_;
};

std::string build_generate_request(const GenerationJob& job);
GenResult parse_generate_response(const std::string& body);

// Deterministic pseudo-random image for a job.
RasterImage stub_generate(const GenerationJob& job);

// Box filter: each output pixel is the per-channel mean of a
// factor x factor block, rounded half-up.
RasterImage downsample_box(const RasterImage& img, int factor);

std::vector<uint8_t> encode_ppm(const RasterImage& img);

// Deterministic job list: ceil(quota/2) CD jobs then floor(quota/2) SD
// jobs; CD cycles cd_prompts in order, SD cycles (prompt x style) pairs
// prompt-major; seeds are a stable hash of (seed_base, class_id, kind,
// index).
std::vector<GenerationJob> plan_jobs(const std::string& class_id,
                                     const promptgen::PromptCorpus& corpus, int quota,
                                     uint64_t seed_base, const JobParams& params = {});

struct JobOutcome {
    std::string job_id;
    bool ok = false;
    bool skipped = false;
    std::string error;
    int attempts = 0;
};

class PartialFailureError : public Error {
public:
    PartialFailureError(std::vector<JobOutcome> outcomes, dataset::Manifest completed,
                        int failed_count)
        : Error("PartialFailure", std::to_string(failed_count) + " job(s) failed"),
          outcomes(std::move(outcomes)),
          completed(std::move(completed)) {}

    std::vector<JobOutcome> outcomes;  // one per submitted job, job order
    dataset::Manifest completed;       // entries from the jobs that did succeed
};

// Run jobs against the backend with bounded concurrency and retries.
// Jobs whose id already appears in `existing` are skipped. Entries come
// back in job order regardless of completion order.
dataset::Manifest execute(const std::vector<GenerationJob>& jobs, GenBackend& backend,
                          const std::filesystem::path& out_dir, const dataset::Manifest& existing);

} // namespace divgen::generation
