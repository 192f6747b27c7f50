#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "divgen/pipeline.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace divgen;

void print_summary(const json& j) { std::cout << j.dump() << std::endl; }

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
};

int cmd_resolve(const CommonArgs& args) {
    auto cfg = pipeline::load_config(args.config_path);
    auto resolved = pipeline::run_resolve(cfg, args.out_dir);
    print_summary({{"command", "resolve"},
                   {"classes", cfg.classes.size()},
                   {"resolved", resolved.size()},
                   {"out", (fs::path(args.out_dir) / "resolved.json").string()}});
    return 0;
}

int cmd_prompts(const CommonArgs& args, const std::string& class_filter) {
    auto cfg = pipeline::load_config(args.config_path);
    auto resolved = pipeline::run_resolve(cfg, args.out_dir);
    int total = 0;
    for (const auto& spec : cfg.classes) {
        if (!class_filter.empty() && spec.id != class_filter) continue;
        std::optional<similarity::ResolvedMeaning> meaning;
        if (auto it = resolved.find(spec.id); it != resolved.end()) meaning = it->second;
        auto corpus = pipeline::run_prompts(cfg, spec, meaning, args.out_dir);
        total += static_cast<int>(corpus.cd_prompts.size());
    }
    print_summary({{"command", "prompts"},
                   {"class", class_filter.empty() ? "*" : class_filter},
                   {"cd_prompts", total},
                   {"out", args.out_dir}});
    return 0;
}

int cmd_generate(const CommonArgs& args) {
    auto cfg = pipeline::load_config(args.config_path);
    auto summary = pipeline::run_generate(cfg, args.out_dir);
    print_summary({{"command", "generate"},
                   {"planned", summary.planned},
                   {"generated", summary.generated},
                   {"skipped", summary.skipped},
                   {"manifest", summary.manifest_path.string()}});
    return 0;
}

int cmd_subsample(const CommonArgs& args, const std::string& manifest_path,
                  const std::string& mode, int n_per_class, double gamma, int n1) {
    auto cfg = pipeline::load_config(args.config_path);
    auto manifest = dataset::read_manifest(manifest_path);
    dataset::Manifest kept;
    if (mode == "low_data") {
        kept = dataset::subsample_low_data(manifest, n_per_class, cfg.seed);
    } else if (mode == "long_tail") {
        kept = dataset::subsample_long_tail(manifest, gamma, n1, cfg.seed);
    } else {
        raise("InvalidConfig", "unknown subsample mode: " + mode);
    }
    fs::create_directories(args.out_dir);
    fs::path out_path = fs::path(args.out_dir) / "subsampled.jsonl";
    dataset::write_manifest(kept, out_path);
    print_summary({{"command", "subsample"},
                   {"mode", mode},
                   {"in_entries", manifest.size()},
                   {"kept", kept.size()},
                   {"out", out_path.string()}});
    return 0;
}

int cmd_train(const CommonArgs& args) {
    auto cfg = pipeline::load_config(args.config_path);
    if (cfg.trainer.epochs < 1) raise("InvalidConfig", "trainer.epochs must be >= 1");
    auto summary = pipeline::run_train(cfg, args.out_dir);
    const auto& last = summary.history.back();
    print_summary({{"command", "train"},
                   {"epochs", summary.history.size()},
                   {"final_loss", last.loss},
                   {"final_eval_acc", last.eval_acc},
                   {"checkpoint", summary.checkpoint_path.string()}});
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint) {
    auto cfg = pipeline::load_config(args.config_path);
    fs::path ckpt = checkpoint.empty() ? fs::path(args.out_dir) / "checkpoint.json"
                                       : fs::path(checkpoint);
    auto report = pipeline::run_evaluate(cfg, ckpt, args.out_dir);
    print_summary(json::parse(metrics::report_to_json(report)));
    return 0;
}

int cmd_is_score(const std::string& probs_path, int splits) {
    Mat probs = metrics::read_prob_csv(probs_path);
    auto is = metrics::inception_score(probs, splits);
    print_summary({{"is_mean", is.mean}, {"is_std", is.std_dev}, {"rows", probs.rows},
                   {"splits", splits}});
    return 0;
}

int cmd_e2e(const CommonArgs& args) {
    auto cfg = pipeline::load_config(args.config_path);
    auto result = pipeline::e2e_offline(cfg, args.out_dir);
    print_summary({{"command", "e2e"},
                   {"manifest_entries", result.manifest.size()},
                   {"new_generations", result.new_generations},
                   {"top1", result.report.top1},
                   {"is_mean", result.report.is_mean},
                   {"checkpoint", result.checkpoint_path.string()}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"divgen: diversified synthetic training data pipeline"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string class_filter, manifest_path, mode = "low_data", checkpoint, probs_path;
    int n_per_class = 100, n1 = 1300, splits = 1;
    double gamma = 100.0;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* opt = sub->add_option("--config", common.config_path, "pipeline config JSON");
        if (needs_config) opt->required();
        sub->add_option("--out", common.out_dir, "output directory");
    };

    auto* resolve = app.add_subcommand("resolve", "resolve ambiguous class meanings");
    add_common(resolve);
    auto* prompts = app.add_subcommand("prompts", "build CD prompt corpora");
    add_common(prompts);
    prompts->add_option("--class", class_filter, "restrict to one class id");
    auto* generate = app.add_subcommand("generate", "plan and run generation jobs");
    add_common(generate);
    auto* subsample = app.add_subcommand("subsample", "low-data / long-tail manifest subsampling");
    add_common(subsample);
    subsample->add_option("--manifest", manifest_path, "input manifest")->required();
    subsample->add_option("--mode", mode, "low_data | long_tail");
    subsample->add_option("--n-per-class", n_per_class, "low-data cap per class");
    subsample->add_option("--gamma", gamma, "long-tail imbalance ratio");
    subsample->add_option("--n1", n1, "long-tail head-class count");
    auto* train = app.add_subcommand("train", "train the toy two-domain classifier");
    add_common(train);
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
    add_common(evaluate);
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint path");
    auto* is_score = app.add_subcommand("is-score", "inception score of a probability CSV");
    is_score->add_option("--probs", probs_path, "probability matrix CSV")->required();
    is_score->add_option("--splits", splits, "number of contiguous splits");
    auto* e2e = app.add_subcommand("e2e", "full offline pipeline with mock providers");
    add_common(e2e);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        if (resolve->parsed()) return cmd_resolve(common);
        if (prompts->parsed()) return cmd_prompts(common, class_filter);
        if (generate->parsed()) return cmd_generate(common);
        if (subsample->parsed()) {
            return cmd_subsample(common, manifest_path, mode, n_per_class, gamma, n1);
        }
        if (train->parsed()) return cmd_train(common);
        if (evaluate->parsed()) return cmd_evaluate(common, checkpoint);
        if (is_score->parsed()) return cmd_is_score(probs_path, splits);
        if (e2e->parsed()) return cmd_e2e(common);
    } catch (const divgen::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 2;
}
