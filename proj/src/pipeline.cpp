#include "divgen/pipeline.hpp"

#include <cmath>
#include <fstream>

#include "divgen/rng.hpp"
#include "json.hpp"

namespace divgen::pipeline {

namespace {

using nlohmann::json;

template <typename T>
void get_if(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

} // namespace

PipelineConfig config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) raise("ConfigParseError", "config is not a JSON object");

    PipelineConfig cfg;
    get_if(j, "seed", cfg.seed);
    get_if(j, "corpus_target", cfg.corpus_target);
    get_if(j, "quota_per_class", cfg.quota_per_class);
    get_if(j, "guidance_scale", cfg.guidance_scale);
    get_if(j, "steps", cfg.steps);
    get_if(j, "width", cfg.width);
    get_if(j, "target_resolution", cfg.target_resolution);
    get_if(j, "batch_size", cfg.batch_size);
    get_if(j, "sampling_weight", cfg.sampling_weight);

    if (j.contains("classes")) {
        for (const auto& cj : j.at("classes")) {
            ClassSpec spec;
            spec.id = cj.at("id").get<std::string>();
            spec.name = cj.value("name", spec.id);
            get_if(cj, "candidates", spec.candidates);
            get_if(cj, "image_keys", spec.image_keys);
            cfg.classes.push_back(std::move(spec));
        }
    }
    if (j.contains("embedding")) {
        const auto& e = j.at("embedding");
        get_if(e, "mode", cfg.embedding.mode);
        get_if(e, "dim", cfg.embedding.dim);
        get_if(e, "seed", cfg.embedding.seed);
        get_if(e, "store_path", cfg.embedding.store_path);
        get_if(e, "mock_images_per_class", cfg.embedding.mock_images_per_class);
    }
    if (j.contains("llm")) {
        const auto& l = j.at("llm");
        get_if(l, "mode", cfg.llm.mode);
        get_if(l, "base_url", cfg.llm.base_url);
        get_if(l, "model", cfg.llm.model);
        get_if(l, "temperature", cfg.llm.temperature);
        get_if(l, "max_tokens", cfg.llm.max_tokens);
        get_if(l, "max_retries", cfg.llm.max_retries);
        get_if(l, "concurrency", cfg.llm.concurrency);
        get_if(l, "seed", cfg.llm.seed);
    }
    if (j.contains("generation")) {
        const auto& g = j.at("generation");
        get_if(g, "mode", cfg.generation.mode);
        get_if(g, "base_url", cfg.generation.base_url);
        get_if(g, "max_concurrency", cfg.generation.max_concurrency);
        get_if(g, "retry_max_attempts", cfg.generation.retry_max_attempts);
        get_if(g, "retry_base_delay_ms", cfg.generation.retry_base_delay_ms);
    }
    if (j.contains("subsample")) {
        const auto& s = j.at("subsample");
        get_if(s, "mode", cfg.subsample.mode);
        get_if(s, "n_per_class", cfg.subsample.n_per_class);
        get_if(s, "gamma", cfg.subsample.gamma);
        get_if(s, "n1", cfg.subsample.n1);
    }
    if (j.contains("toy")) {
        const auto& t = j.at("toy");
        get_if(t, "n_per_class_per_domain", cfg.toy.n_per_class_per_domain);
        get_if(t, "classes", cfg.toy.classes);
        get_if(t, "shift", cfg.toy.shift);
        get_if(t, "scale", cfg.toy.scale);
    }
    if (j.contains("trainer")) {
        const auto& t = j.at("trainer");
        get_if(t, "lambda", cfg.trainer.lambda);
        get_if(t, "learning_rate", cfg.trainer.learning_rate);
        get_if(t, "momentum", cfg.trainer.momentum);
        get_if(t, "epochs", cfg.trainer.epochs);
        get_if(t, "bn_mode", cfg.trainer.bn_mode);
        get_if(t, "eval_bn_domain", cfg.trainer.eval_bn_domain);
        get_if(t, "hidden", cfg.trainer.hidden);
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise("IoError", "cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

std::unique_ptr<similarity::EmbeddingProvider> make_embedding_provider(const PipelineConfig& cfg) {
    if (cfg.embedding.mode == "mock") {
        return std::make_unique<similarity::MockEmbeddingProvider>(cfg.embedding.seed,
                                                                   cfg.embedding.dim);
    }
    if (cfg.embedding.mode == "file") {
        return std::make_unique<similarity::FileEmbeddingStore>(
            similarity::FileEmbeddingStore::load(cfg.embedding.store_path));
    }
    raise("InvalidConfig", "unknown embedding mode: " + cfg.embedding.mode);
}

std::unique_ptr<promptgen::LlmClient> make_llm_client(const PipelineConfig& cfg) {
    if (cfg.llm.mode == "mock") {
        return std::make_unique<promptgen::MockLlmClient>(cfg.llm.seed, cfg.llm.concurrency);
    }
    if (cfg.llm.mode == "http") {
        promptgen::LlmHttpConfig http;
        http.base_url = cfg.llm.base_url;
        http.model = cfg.llm.model;
        http.temperature = cfg.llm.temperature;
        http.max_tokens = cfg.llm.max_tokens;
        http.max_retries = cfg.llm.max_retries;
        http.concurrency = cfg.llm.concurrency;
        return std::make_unique<promptgen::HttpLlmClient>(http);
    }
    raise("InvalidConfig", "unknown llm mode: " + cfg.llm.mode);
}

std::unique_ptr<generation::GenBackend> make_gen_backend(const PipelineConfig& cfg) {
    if (cfg.generation.mode == "stub") {
        return std::make_unique<generation::StubBackend>(cfg.generation.max_concurrency);
    }
    if (cfg.generation.mode == "http") {
        generation::GenHttpConfig http;
        http.base_url = cfg.generation.base_url;
        http.max_concurrency = cfg.generation.max_concurrency;
        http.retry_policy.max_attempts = cfg.generation.retry_max_attempts;
        http.retry_policy.base_delay =
            std::chrono::milliseconds(cfg.generation.retry_base_delay_ms);
        return std::make_unique<generation::HttpGenBackend>(http);
    }
    raise("InvalidConfig", "unknown generation mode: " + cfg.generation.mode);
}

generation::JobParams job_params(const PipelineConfig& cfg) {
    generation::JobParams p;
    p.guidance_scale = cfg.guidance_scale;
    p.steps = cfg.steps;
    p.width = cfg.width;
    p.target_resolution = cfg.target_resolution;
    return p;
}

namespace {

std::vector<std::string> mock_image_keys(const ClassSpec& spec, int count) {
    std::vector<std::string> keys;
    keys.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) keys.push_back(spec.id + "/img/" + std::to_string(i));
    return keys;
}

json resolved_to_json(const similarity::ResolvedMeaning& r) {
    return {{"class_id", r.class_id},
            {"text", r.chosen.text},
            {"index", r.chosen.index},
            {"score", r.score},
            {"all_scores", r.all_scores}};
}

similarity::ResolvedMeaning resolved_from_json(const json& j) {
    similarity::ResolvedMeaning r;
    r.class_id = j.at("class_id").get<std::string>();
    r.chosen.text = j.at("text").get<std::string>();
    r.chosen.index = j.at("index").get<int>();
    r.score = j.at("score").get<double>();
    r.all_scores = j.at("all_scores").get<std::vector<double>>();
    return r;
}

std::map<std::string, similarity::ResolvedMeaning> read_resolved(
    const std::filesystem::path& path) {
    std::map<std::string, similarity::ResolvedMeaning> out;
    std::ifstream in(path);
    if (!in) return out;
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return out;
    for (const auto& [key, value] : j.items()) out[key] = resolved_from_json(value);
    return out;
}

} // namespace

std::map<std::string, similarity::ResolvedMeaning> run_resolve(
    const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    auto provider = make_embedding_provider(cfg);
    std::map<std::string, similarity::ResolvedMeaning> out;

    for (const auto& spec : cfg.classes) {
        if (spec.candidates.empty()) continue;
        std::vector<similarity::MeaningCandidate> candidates;
        std::vector<similarity::EmbeddingVector> candidate_embs;
        for (size_t i = 0; i < spec.candidates.size(); ++i) {
            candidates.push_back({spec.candidates[i], static_cast<int>(i)});
            candidate_embs.push_back(similarity::normalize(provider->get(spec.candidates[i])));
        }
        std::vector<std::string> keys = spec.image_keys.empty()
                                            ? mock_image_keys(spec, cfg.embedding.mock_images_per_class)
                                            : spec.image_keys;
        std::vector<similarity::EmbeddingVector> image_embs;
        image_embs.reserve(keys.size());
        for (const auto& k : keys) image_embs.push_back(similarity::normalize(provider->get(k)));
        out[spec.id] = similarity::resolve_ambiguity(spec.id, candidates, candidate_embs, image_embs);
    }

    std::filesystem::create_directories(out_dir);
    json j = json::object();
    for (const auto& [class_id, r] : out) j[class_id] = resolved_to_json(r);
    std::ofstream file(out_dir / "resolved.json");
    if (!file) raise("IoError", "cannot write resolved.json");
    file << j.dump(2) << '\n';
    return out;
}

promptgen::PromptCorpus run_prompts(const PipelineConfig& cfg, const ClassSpec& spec,
                                    const std::optional<similarity::ResolvedMeaning>& meaning,
                                    const std::filesystem::path& out_dir) {
    auto client = make_llm_client(cfg);
    promptgen::PromptCorpus corpus = promptgen::generate_prompt_corpus(
        spec.id, spec.name, meaning, *client, cfg.corpus_target);

    std::filesystem::create_directories(out_dir);
    std::ofstream file(out_dir / (spec.id + ".prompts.jsonl"));
    if (!file) raise("IoError", "cannot write prompts file for class " + spec.id);
    for (const auto& p : corpus.cd_prompts) {
        json j = {{"class_id", p.class_id},
                  {"kind", promptgen::kind_name(p.kind)},
                  {"text", p.text},
                  {"aspects",
                   {{"foreground", p.source_aspects.foreground},
                    {"background", p.source_aspects.background},
                    {"lighting", p.source_aspects.lighting},
                    {"camera_angle", p.source_aspects.camera_angle}}}};
        file << j.dump() << '\n';
    }
    return corpus;
}

namespace {

promptgen::PromptCorpus read_prompts_file(const std::filesystem::path& path,
                                          const std::string& class_id) {
    std::ifstream in(path);
    if (!in) raise("IoError", "cannot open prompts file: " + path.string());
    promptgen::PromptCorpus corpus;
    corpus.class_id = class_id;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            raise("PromptsParseError", path.string() + " line " + std::to_string(line_no));
        }
        promptgen::AspectSet a;
        const auto& aj = j.at("aspects");
        a.foreground = aj.at("foreground").get<std::string>();
        a.background = aj.at("background").get<std::string>();
        a.lighting = aj.at("lighting").get<std::string>();
        a.camera_angle = aj.at("camera_angle").get<std::string>();
        corpus.cd_prompts.push_back(promptgen::assemble_cd_prompt(class_id, a));
    }
    corpus.styles = promptgen::load_style_list();
    return corpus;
}

} // namespace

GenerateSummary run_generate(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    GenerateSummary summary;
    summary.manifest_path = out_dir / "manifest.jsonl";

    dataset::Manifest existing;
    if (std::filesystem::exists(summary.manifest_path)) {
        existing = dataset::read_manifest(summary.manifest_path);
    }

    auto resolved = read_resolved(out_dir / "resolved.json");
    auto backend = make_gen_backend(cfg);

    dataset::Manifest merged = existing;
    for (const auto& spec : cfg.classes) {
        std::optional<similarity::ResolvedMeaning> meaning;
        if (auto it = resolved.find(spec.id); it != resolved.end()) meaning = it->second;

        std::filesystem::path prompts_path = out_dir / (spec.id + ".prompts.jsonl");
        promptgen::PromptCorpus corpus =
            std::filesystem::exists(prompts_path)
                ? read_prompts_file(prompts_path, spec.id)
                : run_prompts(cfg, spec, meaning, out_dir);

        auto jobs = generation::plan_jobs(spec.id, corpus, cfg.quota_per_class, cfg.seed,
                                          job_params(cfg));
        summary.planned += static_cast<int>(jobs.size());
        dataset::Manifest fresh;
        try {
            fresh = generation::execute(jobs, *backend, out_dir, merged);
        } catch (const generation::PartialFailureError& e) {
            // Keep what did finish so a rerun only redoes the failures.
            merged.insert(merged.end(), e.completed.begin(), e.completed.end());
            dataset::write_manifest(merged, summary.manifest_path);
            throw;
        }
        summary.generated += static_cast<int>(fresh.size());
        summary.skipped += static_cast<int>(jobs.size()) - static_cast<int>(fresh.size());
        merged.insert(merged.end(), fresh.begin(), fresh.end());
    }
    dataset::write_manifest(merged, summary.manifest_path);
    return summary;
}

namespace {

trainer::TrainConfig trainer_config(const PipelineConfig& cfg) {
    trainer::TrainConfig tc;
    tc.learning_rate = cfg.trainer.learning_rate;
    tc.sgd_momentum = cfg.trainer.momentum;
    tc.lambda = cfg.trainer.lambda;
    tc.epochs = cfg.trainer.epochs;
    tc.plan = dataset::BatchPlan::make(cfg.batch_size, cfg.sampling_weight, cfg.seed);
    tc.bn_mode = cfg.trainer.bn_mode == "vanilla" ? trainer::BnMode::Vanilla
                                                  : trainer::BnMode::Dual;
    tc.eval_bn_domain = cfg.trainer.eval_bn_domain == "synthetic" ? dataset::Domain::Synthetic
                                                                  : dataset::Domain::Real;
    tc.seed = cfg.seed;
    return tc;
}

// Manifest view of the toy real rows, so the subsample stage has
// something faithful to act on.
dataset::Manifest toy_real_manifest(const dataset::TwoDomainToy& toy) {
    dataset::Manifest m;
    std::map<int, int> per_class_counter;
    for (int i = 0; i < toy.real.x.rows; ++i) {
        int c = toy.real.labels[static_cast<size_t>(i)];
        int k = per_class_counter[c]++;
        dataset::ManifestEntry e;
        e.class_id = "toy-" + std::to_string(c);
        e.id = e.class_id + "/real/" + std::to_string(k);
        e.path = "toy.csv#" + std::to_string(i);
        e.domain = dataset::Domain::Real;
        e.format = "csv-row";
        std::string row = std::to_string(toy.real.x.at(i, 0)) + "," +
                          std::to_string(toy.real.x.at(i, 1)) + "," + std::to_string(c);
        e.checksum = to_hex64(fnv1a64(row));
        m.push_back(std::move(e));
    }
    return m;
}

trainer::LabeledData select_rows(const dataset::ToySet& set, const std::vector<int>& rows) {
    trainer::LabeledData out;
    out.x = Mat(static_cast<int>(rows.size()), set.x.cols);
    out.labels.reserve(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < set.x.cols; ++c) out.x.at(static_cast<int>(r), c) = set.x.at(rows[r], c);
        out.labels.push_back(set.labels[static_cast<size_t>(rows[r])]);
    }
    return out;
}

// Apply the configured subsample mode to the toy real manifest and map
// the surviving entries back to toy rows.
trainer::LabeledData subsampled_real_data(const PipelineConfig& cfg,
                                          const dataset::TwoDomainToy& toy,
                                          const std::filesystem::path& out_dir) {
    dataset::Manifest real_manifest = toy_real_manifest(toy);
    dataset::Manifest kept = real_manifest;
    if (cfg.subsample.mode == "low_data") {
        kept = dataset::subsample_low_data(real_manifest, cfg.subsample.n_per_class, cfg.seed);
    } else if (cfg.subsample.mode == "long_tail") {
        kept = dataset::subsample_long_tail(real_manifest, cfg.subsample.gamma, cfg.subsample.n1,
                                            cfg.seed);
    } else if (cfg.subsample.mode != "none") {
        raise("InvalidConfig", "unknown subsample mode: " + cfg.subsample.mode);
    }
    dataset::write_manifest(kept, out_dir / "real_manifest.jsonl");

    std::vector<int> rows;
    rows.reserve(kept.size());
    for (const auto& e : kept) {
        size_t hash_pos = e.path.find('#');
        rows.push_back(std::stoi(e.path.substr(hash_pos + 1)));
    }
    return select_rows(toy.real, rows);
}

trainer::LabeledData toy_eval_set(const PipelineConfig& cfg) {
    // Held-out real-domain draw under a derived seed.
    dataset::TwoDomainToy holdout =
        dataset::make_two_domain_toy(cfg.seed + 1, cfg.toy.n_per_class_per_domain,
                                     cfg.toy.classes, cfg.toy.shift, cfg.toy.scale);
    return trainer::LabeledData{holdout.real.x, holdout.real.labels};
}

} // namespace

TrainSummary run_train(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    dataset::TwoDomainToy toy = dataset::make_two_domain_toy(
        cfg.seed, cfg.toy.n_per_class_per_domain, cfg.toy.classes, cfg.toy.shift, cfg.toy.scale);
    dataset::write_toy_csv(toy, out_dir / "toy.csv");

    trainer::LabeledData real = subsampled_real_data(cfg, toy, out_dir);
    trainer::LabeledData synthetic{toy.synthetic.x, toy.synthetic.labels};
    trainer::LabeledData eval_set = toy_eval_set(cfg);

    trainer::TrainConfig tc = trainer_config(cfg);
    trainer::Network net = trainer::Network::make(2, cfg.trainer.hidden, cfg.toy.classes,
                                                  tc.bn_mode, cfg.seed);
    TrainSummary summary;
    summary.history = trainer::train(net, real, synthetic, eval_set, tc);
    summary.checkpoint_path = out_dir / "checkpoint.json";
    summary.history_path = out_dir / "history.csv";
    trainer::save_checkpoint(net, summary.checkpoint_path, tc);
    trainer::write_history_csv(summary.history, summary.history_path);
    return summary;
}

metrics::MetricReport run_evaluate(const PipelineConfig& cfg,
                                   const std::filesystem::path& checkpoint_path,
                                   const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    trainer::Network net = trainer::load_checkpoint(checkpoint_path);
    trainer::LabeledData eval_set = toy_eval_set(cfg);

    dataset::Domain eval_domain = cfg.trainer.eval_bn_domain == "synthetic"
                                      ? dataset::Domain::Synthetic
                                      : dataset::Domain::Real;
    Mat logits = trainer::forward(net, eval_set.x, eval_domain, trainer::Phase::Eval, nullptr,
                                  false);

    std::vector<int> preds;
    preds.reserve(static_cast<size_t>(logits.rows));
    Mat probs(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        int best = 0;
        double mx = logits.at(i, 0);
        for (int j = 1; j < logits.cols; ++j) {
            if (logits.at(i, j) > mx) {
                mx = logits.at(i, j);
                best = j;
            }
        }
        preds.push_back(best);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - mx);
        for (int j = 0; j < logits.cols; ++j) probs.at(i, j) = std::exp(logits.at(i, j) - mx) / sum;
    }

    metrics::MetricReport report;
    report.top1 = metrics::top1_accuracy(preds, eval_set.labels);

    // Bucket every class by its real training count.
    std::map<int, dataset::ShotBucket> buckets;
    for (int lab : eval_set.labels) {
        buckets[lab] = dataset::bucket_for_count(cfg.toy.n_per_class_per_domain);
    }
    for (const auto& [bucket, acc] : metrics::bucket_accuracy(preds, eval_set.labels, buckets)) {
        report.per_bucket[dataset::bucket_name(bucket)] = acc;
    }

    auto is = metrics::inception_score(probs, 1);
    report.is_mean = is.mean;
    report.is_std = is.std_dev;

    std::ofstream file(out_dir / "metrics.json");
    if (!file) raise("IoError", "cannot write metrics.json");
    file << metrics::report_to_json(report) << '\n';
    return report;
}

E2eResult e2e_offline(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    if (cfg.llm.mode != "mock" || cfg.generation.mode != "stub" || cfg.embedding.mode != "mock") {
        raise("InvalidConfig", "e2e_offline requires mock/stub providers");
    }
    std::filesystem::create_directories(out_dir);

    run_resolve(cfg, out_dir);
    GenerateSummary gen = run_generate(cfg, out_dir);
    TrainSummary tr = run_train(cfg, out_dir);
    metrics::MetricReport report = run_evaluate(cfg, tr.checkpoint_path, out_dir);

    E2eResult result;
    result.manifest = dataset::read_manifest(gen.manifest_path);
    result.new_generations = gen.generated;
    result.report = report;
    result.checkpoint_path = tr.checkpoint_path;
    return result;
}

} // namespace divgen::pipeline
