#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sys/wait.h>
#include <atomic>
#include <thread>

#include "divgen/base64.hpp"
#include "divgen/pipeline.hpp"
#include "httplib.h"
#include "divgen/rng.hpp"
#include "json.hpp"

using namespace divgen;
using namespace divgen::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small-but-complete config: 3 classes, tiny images, quick training.
PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.seed = 77;
    for (const char* id : {"crane", "goldfish", "leopard"}) {
        ClassSpec spec;
        spec.id = id;
        spec.name = id;
        cfg.classes.push_back(spec);
    }
    cfg.classes[0].candidates = {"a large long-legged bird", "a large machine used for lifting"};
    cfg.corpus_target = 40;
    cfg.quota_per_class = 4;
    cfg.width = 64;
    cfg.target_resolution = 16;
    cfg.batch_size = 16;
    cfg.toy.n_per_class_per_domain = 60;
    cfg.trainer.epochs = 3;
    return cfg;
}

struct CliResult {
    int exit_code;
    std::string stdout_text;
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(DIVGEN_CLI_PATH) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

} // namespace

TEST_CASE("config defaults match the pipeline's standard values") {
    PipelineConfig cfg;
    CHECK(cfg.trainer.lambda == 0.6);
    CHECK(cfg.sampling_weight == 0.5);
    CHECK(cfg.guidance_scale == 2.0);
    CHECK(cfg.steps == 50);
    CHECK(cfg.corpus_target == 600);
    CHECK(cfg.width == 1024);
    CHECK(cfg.target_resolution == 256);
    CHECK(cfg.llm.temperature == 0.75);
    CHECK(cfg.trainer.bn_mode == "dual");
    CHECK(cfg.trainer.eval_bn_domain == "real");
    CHECK(promptgen::load_style_list().size() == 60);
}

TEST_CASE("config parsing: overrides land, absent fields keep defaults") {
    std::string text = R"({
        "seed": 9,
        "corpus_target": 50,
        "classes": [{"id": "crane", "candidates": ["bird", "machine"]}],
        "llm": {"seed": 5},
        "trainer": {"lambda": 0.3, "hidden": [8, 8]}
    })";
    auto cfg = config_from_json(text);
    CHECK(cfg.seed == 9);
    CHECK(cfg.corpus_target == 50);
    REQUIRE(cfg.classes.size() == 1);
    CHECK(cfg.classes[0].name == "crane"); // name defaults to id
    CHECK(cfg.classes[0].candidates.size() == 2);
    CHECK(cfg.llm.seed == 5);
    CHECK(cfg.llm.temperature == 0.75);
    CHECK(cfg.trainer.lambda == 0.3);
    CHECK(cfg.trainer.hidden == std::vector<int>{8, 8});
    CHECK(cfg.guidance_scale == 2.0);
}

TEST_CASE("run_resolve: deterministic choice written to resolved.json") {
    auto dir = fresh_dir("divgen_pipe_resolve");
    auto cfg = small_config();
    auto resolved = run_resolve(cfg, dir);
    REQUIRE(resolved.count("crane") == 1);
    CHECK(resolved["crane"].all_scores.size() == 2);

    auto again = run_resolve(cfg, dir);
    CHECK(again["crane"].chosen.index == resolved["crane"].chosen.index);
    CHECK(fs::exists(dir / "resolved.json"));

    std::ifstream in(dir / "resolved.json");
    json j = json::parse(in);
    CHECK(j.contains("crane"));
    CHECK(j["crane"]["all_scores"].size() == 2);
}

TEST_CASE("e2e_offline: counts, checksums, resume, determinism") {
    auto dir = fresh_dir("divgen_pipe_e2e");
    auto cfg = small_config();

    auto first = e2e_offline(cfg, dir);
    CHECK(first.new_generations == 12); // 3 classes x 4 images
    REQUIRE(first.manifest.size() == 12);
    for (const auto& e : first.manifest) {
        REQUIRE(e.provenance.has_value());
        CHECK(e.provenance->guidance_scale == 2.0);
        CHECK(e.provenance->steps == 50);
        std::ifstream img(dir / e.path, std::ios::binary);
        REQUIRE(img.good());
        std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(img)),
                                   std::istreambuf_iterator<char>());
        CHECK(to_hex64(fnv1a64_bytes(bytes.data(), bytes.size())) == e.checksum);
    }
    CHECK(fs::exists(dir / "checkpoint.json"));
    CHECK(fs::exists(dir / "metrics.json"));
    CHECK(fs::exists(dir / "real_manifest.jsonl"));
    CHECK(first.report.is_mean >= 1.0 - 1e-9);

    // Rerun resumes: nothing regenerated, reports identical.
    auto second = e2e_offline(cfg, dir);
    CHECK(second.new_generations == 0);
    CHECK(second.manifest.size() == first.manifest.size());
    CHECK(second.report.top1 == first.report.top1);
    CHECK(second.report.is_mean == first.report.is_mean);

    // A fresh directory with the same seed reproduces the manifest.
    auto dir2 = fresh_dir("divgen_pipe_e2e_b");
    auto third = e2e_offline(cfg, dir2);
    REQUIRE(third.manifest.size() == first.manifest.size());
    for (size_t i = 0; i < first.manifest.size(); ++i) {
        CHECK(third.manifest[i].id == first.manifest[i].id);
        CHECK(third.manifest[i].checksum == first.manifest[i].checksum);
        CHECK(third.manifest[i].provenance->prompt_text ==
              first.manifest[i].provenance->prompt_text);
    }
    CHECK(third.report.top1 == first.report.top1);
}

TEST_CASE("e2e_offline: refuses non-mock providers") {
    auto cfg = small_config();
    cfg.generation.mode = "http";
    CHECK_THROWS_WITH_AS(e2e_offline(cfg, fs::temp_directory_path() / "divgen_pipe_never"),
                         doctest::Contains("InvalidConfig"), Error);
}

TEST_CASE("provider factories: http modes demand a base_url, bad modes rejected") {
    auto cfg = small_config();
    cfg.llm.mode = "http";
    CHECK_THROWS_WITH_AS(make_llm_client(cfg), doctest::Contains("InvalidConfig"), Error);
    cfg.llm.mode = "carrier-pigeon";
    CHECK_THROWS_WITH_AS(make_llm_client(cfg), doctest::Contains("InvalidConfig"), Error);
    cfg.generation.mode = "http";
    CHECK_THROWS_WITH_AS(make_gen_backend(cfg), doctest::Contains("InvalidConfig"), Error);
    cfg.embedding.mode = "file";
    cfg.embedding.store_path = "/nonexistent/store.jsonl";
    CHECK_THROWS_WITH_AS(make_embedding_provider(cfg), doctest::Contains("StoreParseError"),
                         Error);
}

TEST_CASE("e2e_offline: long-tail subsample stage filters the real manifest") {
    auto dir = fresh_dir("divgen_pipe_lt");
    auto cfg = small_config();
    cfg.toy.classes = 4;
    cfg.toy.n_per_class_per_domain = 50;
    cfg.subsample.mode = "long_tail";
    cfg.subsample.gamma = 10.0;
    cfg.subsample.n1 = 50;
    e2e_offline(cfg, dir);
    auto kept = dataset::read_manifest(dir / "real_manifest.jsonl");
    std::map<std::string, int> counts;
    for (const auto& e : kept) ++counts[e.class_id];
    std::multiset<int> sizes;
    for (const auto& [cls, n] : counts) sizes.insert(n);
    // n_k = 50 * 10^(-(k-1)/3), floored: 50, 23, 10, 5.
    CHECK(sizes == std::multiset<int>{5, 10, 23, 50});
}

TEST_CASE("run_generate: partial failure keeps finished entries; rerun completes the rest") {
    // HTTP backend that rejects SD prompts until healed.
    std::atomic<bool> healthy{false};
    httplib::Server srv;
    srv.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        std::string prompt = body["prompt"].get<std::string>();
        bool is_cd = prompt.rfind("a photograph of ", 0) == 0;
        if (!is_cd && !healthy) {
            res.status = 503;
            return;
        }
        std::vector<uint8_t> payload = {1, 2, 3, 4};
        payload.push_back(static_cast<uint8_t>(body["seed"].get<uint64_t>() & 0xFF));
        json out = {{"image_b64", base64_encode(payload)}, {"format", "png"}};
        res.set_content(out.dump(), "application/json");
    });
    int port = srv.bind_to_any_port("127.0.0.1");
    std::thread server([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    auto dir = fresh_dir("divgen_pipe_partial");
    auto cfg = small_config();
    cfg.classes.resize(1);
    cfg.quota_per_class = 4; // 2 CD + 2 SD
    cfg.generation.mode = "http";
    cfg.generation.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.generation.retry_max_attempts = 2;
    cfg.generation.retry_base_delay_ms = 1;

    CHECK_THROWS_WITH_AS(run_generate(cfg, dir), doctest::Contains("PartialFailure"), Error);
    auto after_failure = dataset::read_manifest(dir / "manifest.jsonl");
    CHECK(after_failure.size() == 2); // the CD jobs made it in

    healthy = true;
    auto summary = run_generate(cfg, dir);
    srv.stop();
    server.join();
    CHECK(summary.skipped == 2);
    CHECK(summary.generated == 2);
    auto final_manifest = dataset::read_manifest(dir / "manifest.jsonl");
    CHECK(final_manifest.size() == 4);
    for (const auto& e : final_manifest) CHECK(e.format == "png");
}

TEST_CASE("cli: is-score on uniform rows prints mean 1") {
    auto dir = fresh_dir("divgen_cli_is");
    auto csv = dir / "p.csv";
    {
        std::ofstream out(csv);
        out << "0.25,0.25,0.25,0.25\n0.25,0.25,0.25,0.25\n";
    }
    auto res = run_cli("is-score --probs " + csv.string());
    CHECK(res.exit_code == 0);
    json j = json::parse(res.stdout_text);
    CHECK(j["is_mean"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cli: generate without --config exits 2") {
    auto res = run_cli("generate");
    CHECK(res.exit_code == 2);
}

TEST_CASE("cli: unknown subcommand exits 2") {
    auto res = run_cli("frobnicate");
    CHECK(res.exit_code == 2);
}

TEST_CASE("cli: domain error surfaces as exit 1") {
    auto dir = fresh_dir("divgen_cli_err");
    auto cfg_path = dir / "cfg.json";
    std::ofstream(cfg_path) << R"({"classes": []})";
    // Missing manifest file -> IoError -> exit 1.
    auto res = run_cli("subsample --config " + cfg_path.string() + " --manifest " +
                       (dir / "absent.jsonl").string() + " --out " + dir.string());
    CHECK(res.exit_code == 1);
}

TEST_CASE("cli: prompts subcommand writes the corpus file") {
    auto dir = fresh_dir("divgen_cli_prompts");
    auto cfg = small_config();
    auto cfg_path = dir / "cfg.json";
    {
        json j = {{"seed", cfg.seed},
                  {"corpus_target", 40},
                  {"classes", json::array({{{"id", "crane"},
                                            {"candidates", json::array({"a large long-legged bird",
                                                                        "a large machine used for lifting"})}}})}};
        std::ofstream(cfg_path) << j.dump();
    }
    auto res = run_cli("prompts --config " + cfg_path.string() + " --class crane --out " +
                       (dir / "out").string());
    CHECK(res.exit_code == 0);
    json summary = json::parse(res.stdout_text);
    CHECK(summary["cd_prompts"] == 40);

    std::ifstream in(dir / "out" / "crane.prompts.jsonl");
    REQUIRE(in.good());
    int lines = 0;
    for (std::string l; std::getline(in, l);) {
        if (l.empty()) continue;
        json entry = json::parse(l);
        CHECK(entry["kind"] == "cd");
        CHECK(entry["text"].get<std::string>().rfind("a photograph of ", 0) == 0);
        ++lines;
    }
    CHECK(lines == 40);
}

TEST_CASE("cli: prompts at the default 600 target") {
    auto dir = fresh_dir("divgen_cli_prompts600");
    auto cfg_path = dir / "cfg.json";
    std::ofstream(cfg_path) << R"({"classes": [{"id": "crane"}]})";
    auto res = run_cli("prompts --config " + cfg_path.string() + " --class crane --out " +
                       (dir / "out").string());
    CHECK(res.exit_code == 0);
    json summary = json::parse(res.stdout_text);
    CHECK(summary["cd_prompts"] == 600);
    std::ifstream in(dir / "out" / "crane.prompts.jsonl");
    int lines = 0;
    for (std::string l; std::getline(in, l);) {
        if (!l.empty()) ++lines;
    }
    CHECK(lines == 600);
}

TEST_CASE("cli: e2e then resumed generate subcommand") {
    auto dir = fresh_dir("divgen_cli_e2e");
    auto cfg_path = dir / "cfg.json";
    {
        json j = {{"seed", 5},
                  {"corpus_target", 40},
                  {"quota_per_class", 4},
                  {"width", 64},
                  {"target_resolution", 16},
                  {"batch_size", 16},
                  {"toy", {{"n_per_class_per_domain", 40}}},
                  {"trainer", {{"epochs", 2}}},
                  {"classes", json::array({{{"id", "crane"}}, {{"id", "goldfish"}}})}};
        std::ofstream(cfg_path) << j.dump();
    }
    auto out_dir = dir / "out";
    auto res = run_cli("e2e --config " + cfg_path.string() + " --out " + out_dir.string());
    CHECK(res.exit_code == 0);
    json summary = json::parse(res.stdout_text);
    CHECK(summary["new_generations"] == 8);
    CHECK(summary["manifest_entries"] == 8);

    auto res2 = run_cli("generate --config " + cfg_path.string() + " --out " + out_dir.string());
    CHECK(res2.exit_code == 0);
    json summary2 = json::parse(res2.stdout_text);
    CHECK(summary2["generated"] == 0);
    CHECK(summary2["skipped"] == 8);
}
