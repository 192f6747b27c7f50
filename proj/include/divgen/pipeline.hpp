#pragma once
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "divgen/dataset.hpp"
#include "divgen/error.hpp"
#include "divgen/generation.hpp"
#include "divgen/metrics.hpp"
#include "divgen/prompt_engine.hpp"
#include "divgen/similarity.hpp"
#include "divgen/trainer.hpp"

namespace divgen::pipeline {

struct ClassSpec {
    std::string id;
    std::string name;
    std::vector<std::string> candidates; // meaning phrases; empty = unambiguous
    std::vector<std::string> image_keys; // embedding-store keys; empty = derived mock keys
};

struct EmbeddingConfig {
    std::string mode = "mock"; // mock | file
    int dim = 16;
    uint64_t seed = 101;
    std::string store_path;
    int mock_images_per_class = 8;
};

struct LlmConfig {
    std::string mode = "mock"; // mock | http
    std::string base_url;
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.75;
    int max_tokens = 4096;
    int max_retries = 3;
    int concurrency = 1;
    uint64_t seed = 202;
};

struct GenConfig {
    std::string mode = "stub"; // stub | http
    std::string base_url;
    int max_concurrency = 4;
    int retry_max_attempts = 3;
    int retry_base_delay_ms = 10;
};

struct SubsampleConfig {
    std::string mode = "none"; // none | low_data | long_tail
    int n_per_class = 100;
    double gamma = 100.0;
    int n1 = 1300;
};

struct ToyConfig {
    int n_per_class_per_domain = 200;
    int classes = 2;
    double shift = 2.0;
    double scale = 3.0;
};

struct TrainerConfig {
    double lambda = 0.6;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int epochs = 10;
    std::string bn_mode = "dual";         // dual | vanilla
    std::string eval_bn_domain = "real";  // real | synthetic
    std::vector<int> hidden = {16};
};

struct PipelineConfig {
    uint64_t seed = 1;
    std::vector<ClassSpec> classes;
    EmbeddingConfig embedding;
    LlmConfig llm;
    GenConfig generation;
    SubsampleConfig subsample;
    ToyConfig toy;
    TrainerConfig trainer;
    int corpus_target = 600;
    int quota_per_class = 20;
    double guidance_scale = 2.0;
    int steps = 50;
    int width = 1024;
    int target_resolution = 256;
    int batch_size = 64;
    double sampling_weight = 0.5;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const std::string& text);

std::unique_ptr<similarity::EmbeddingProvider> make_embedding_provider(const PipelineConfig& cfg);
std::unique_ptr<promptgen::LlmClient> make_llm_client(const PipelineConfig& cfg);
std::unique_ptr<generation::GenBackend> make_gen_backend(const PipelineConfig& cfg);

generation::JobParams job_params(const PipelineConfig& cfg);

// resolve: pick a meaning per ambiguous class, write resolved.json.
std::map<std::string, similarity::ResolvedMeaning> run_resolve(
    const PipelineConfig& cfg, const std::filesystem::path& out_dir);

// prompts: build the CD corpus for one class, write {class}.prompts.jsonl.
promptgen::PromptCorpus run_prompts(const PipelineConfig& cfg, const ClassSpec& spec,
                                    const std::optional<similarity::ResolvedMeaning>& meaning,
                                    const std::filesystem::path& out_dir);

struct GenerateSummary {
    int planned = 0;
    int skipped = 0;
    int generated = 0;
    std::filesystem::path manifest_path;
};

// generate: plan and execute jobs for every class; resumable through
// {out}/manifest.jsonl.
GenerateSummary run_generate(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

struct TrainSummary {
    std::vector<trainer::EpochStats> history;
    std::filesystem::path checkpoint_path;
    std::filesystem::path history_path;
};

TrainSummary run_train(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

metrics::MetricReport run_evaluate(const PipelineConfig& cfg,
                                   const std::filesystem::path& checkpoint_path,
                                   const std::filesystem::path& out_dir);

struct E2eResult {
    dataset::Manifest manifest;        // synthetic entries after the run
    int new_generations = 0;
    metrics::MetricReport report;
    std::filesystem::path checkpoint_path;
};

// Full offline chain: resolve -> prompts -> generate -> subsample ->
// train -> evaluate, with mock/stub providers only.
E2eResult e2e_offline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

} // namespace divgen::pipeline
