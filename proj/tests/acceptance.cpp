// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Each criterion carries its own tolerance and, where
// stated, a wall-clock budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <vector>

#include "divgen/pipeline.hpp"
#include "divgen/rng.hpp"

using namespace divgen;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int number;
    std::string name;
    std::function<void(std::ostringstream&)> run; // throws or writes failures
};

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

#define EXPECT(cond, what)                                             \
    do {                                                               \
        if (!(cond)) fail << "\n    expected: " << (what);             \
    } while (0)

// ── 1. Ambiguity-resolution oracle ────────────────────────────────────────────────

size_t brute_force_argmax(const std::vector<similarity::EmbeddingVector>& cand_embs,
                          const std::vector<similarity::EmbeddingVector>& image_embs) {
    size_t best = 0;
    double best_sum = -1e300;
    for (size_t c = 0; c < cand_embs.size(); ++c) {
        double sum = 0.0;
        for (const auto& img : image_embs) {
            for (size_t d = 0; d < img.values.size(); ++d) {
                sum += img.values[d] * cand_embs[c].values[d];
            }
        }
        if (sum > best_sum) {
            best_sum = sum;
            best = c;
        }
    }
    return best;
}

void criterion_lar_oracle(std::ostringstream& fail) {
    Rng rng(10001);
    int mismatches = 0, tie_cases = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        int dim = 2 + static_cast<int>(rng.below(7));
        int n_cand = 1 + static_cast<int>(rng.below(5));
        int n_img = 1 + static_cast<int>(rng.below(10));
        std::vector<similarity::MeaningCandidate> cands;
        std::vector<similarity::EmbeddingVector> cand_embs, images;
        for (int c = 0; c < n_cand; ++c) {
            cands.push_back({"cand" + std::to_string(c), c});
            similarity::EmbeddingVector v;
            for (int d = 0; d < dim; ++d) v.values.push_back(rng.normal());
            cand_embs.push_back(similarity::normalize(v));
        }
        // Every tenth instance duplicates candidate 0 at the tail to
        // force an exact score tie; both sides must break to index 0.
        if (trial % 10 == 0 && n_cand >= 2) {
            cand_embs.back() = cand_embs.front();
            ++tie_cases;
        }
        for (int i = 0; i < n_img; ++i) {
            similarity::EmbeddingVector v;
            for (int d = 0; d < dim; ++d) v.values.push_back(rng.normal());
            images.push_back(similarity::normalize(v));
        }
        auto r = similarity::resolve_ambiguity("c", cands, cand_embs, images);
        if (static_cast<size_t>(r.chosen.index) != brute_force_argmax(cand_embs, images)) {
            ++mismatches;
        }
        if (trial % 10 == 0 && n_cand >= 2 &&
            cand_embs.front().values == cand_embs.back().values) {
            // Tied instance: the winner must never be the duplicate if
            // candidate 0 attains the max.
            double s0 = r.all_scores.front(), sl = r.all_scores.back();
            if (s0 == r.score && sl == r.score &&
                static_cast<size_t>(r.chosen.index) == cands.size() - 1) {
                fail << "\n    tie broken to the larger index";
            }
        }
    }
    EXPECT(mismatches == 0, std::to_string(mismatches) + " of 1000 disagreed with brute force");
    EXPECT(tie_cases >= 50, "tie coverage");
}

// ── 2. Prompt grammar ────────────────────────────────────────────────

void criterion_prompt_grammar(std::ostringstream& fail) {
    std::regex grammar(R"(^a photograph of .+, .+, .+, .+$)");
    for (const char* cls : {"crane", "goldfish"}) {
        promptgen::MockLlmClient client(fnv1a64(cls));
        auto corpus = promptgen::generate_prompt_corpus(cls, cls, std::nullopt, client, 600);
        EXPECT(corpus.cd_prompts.size() == 600, "600 prompts for class " + std::string(cls));
        std::set<std::string> unique;
        int bad = 0;
        for (const auto& p : corpus.cd_prompts) {
            unique.insert(p.text);
            if (!std::regex_match(p.text, grammar)) ++bad;
        }
        EXPECT(unique.size() == 600, "600 unique prompt texts for " + std::string(cls));
        EXPECT(bad == 0, std::to_string(bad) + " prompts broke the grammar");
    }

    promptgen::AspectSet goldfish{"goldfish swimming in a fish tank",
                                  "bubbles, decorative plants, pebbles",
                                  "artificial aquarium light", "medium shot"};
    auto p = promptgen::assemble_cd_prompt("goldfish", goldfish);
    EXPECT(p.text ==
               "a photograph of goldfish swimming in a fish tank, bubbles, decorative plants, "
               "pebbles, artificial aquarium light, medium shot",
           "goldfish prompt byte-for-byte");
}

// ── 3. Style fidelity ────────────────────────────────────────────────

void criterion_style_fidelity(std::ostringstream& fail) {
    auto styles = promptgen::load_style_list();
    EXPECT(styles.size() == 60, "60 styles");
    EXPECT(styles.front() == "Sketch", "first style Sketch");
    EXPECT(styles[1] == "Painting", "second style Painting");
    EXPECT(styles[2] == "Illustration", "third style Illustration");
    EXPECT(styles.back() == "Sand sculpture", "last style Sand sculpture");
    EXPECT(std::set<std::string>(styles.begin(), styles.end()).size() == 60,
           "styles pairwise distinct");

    promptgen::AspectSet goldfish{"goldfish swimming in a fish tank",
                                  "bubbles, decorative plants, pebbles",
                                  "artificial aquarium light", "medium shot"};
    auto cd = promptgen::assemble_cd_prompt("goldfish", goldfish);
    std::string body = cd.text.substr(std::string("a photograph of ").size());
    std::set<std::string> sd_texts;
    for (const auto& style : styles) {
        auto sd = promptgen::apply_style(cd, style);
        sd_texts.insert(sd.text);
        std::string lead = std::string(sd.text.rfind("an ", 0) == 0 ? "an " : "a ") +
                           promptgen::render_style_keyword(style) + " of ";
        if (sd.text.rfind(lead, 0) != 0 || sd.text.substr(lead.size()) != body) {
            fail << "\n    aspect body altered for style " << style;
        }
    }
    EXPECT(sd_texts.size() == 60, "60 distinct SD prompts");
}

// ── 4. Long-tail formula ─────────────────────────────────────────────

void criterion_long_tail(std::ostringstream& fail) {
    auto counts5 = dataset::long_tail_counts(5, 100, 100.0);
    EXPECT(counts5 == (std::vector<long long>{100, 31, 10, 3, 1}),
           "K=5, n1=100, gamma=100 -> [100, 31, 10, 3, 1]");
    auto counts1000 = dataset::long_tail_counts(1000, 1300, 100.0);
    EXPECT(counts1000.back() == 13, "K=1000, n1=1300, gamma=100 -> rank-1000 count 13");

    Rng rng(4040);
    for (int trial = 0; trial < 100; ++trial) {
        int k = 2 + static_cast<int>(rng.below(200));
        double gamma = 1.0 + rng.uniform01() * 499.0 + 1e-6;
        auto counts = dataset::long_tail_counts(k, 1300, gamma);
        for (size_t i = 1; i < counts.size(); ++i) {
            if (counts[i] > counts[i - 1]) fail << "\n    counts increased at rank " << i + 1;
        }
    }
}

// ── 5. Batch composition ─────────────────────────────────────────────

void criterion_batch_composition(std::ostringstream& fail) {
    auto plan = dataset::BatchPlan::make(64, 0.5, 777);
    const size_t n_real = 3200, n_syn = 500;
    auto batches = dataset::compose_index_batches(n_real, n_syn, plan, 0);
    EXPECT(batches.size() == 100, "100 batches from a 3200-entry real pool");
    for (const auto& b : batches) {
        if (b.real.size() != 32 || b.synthetic.size() != 32) {
            fail << "\n    batch split is not exactly 32 real / 32 synthetic";
            break;
        }
    }
    auto again = dataset::compose_index_batches(n_real, n_syn, plan, 0);
    bool identical = batches.size() == again.size();
    for (size_t i = 0; identical && i < batches.size(); ++i) {
        identical = batches[i].real == again[i].real && batches[i].synthetic == again[i].synthetic;
    }
    EXPECT(identical, "identical composition under the same seed");

    auto zero = dataset::BatchPlan::make(64, 0.0, 777);
    auto real_only = dataset::compose_index_batches(n_real, n_syn, zero, 0);
    size_t syn_touched = 0;
    for (const auto& b : real_only) syn_touched += b.synthetic.size();
    EXPECT(syn_touched == 0, "w=0 touches no synthetic entries");
}

// ── 6. Gradient check ────────────────────────────────────────────────

void criterion_grad_check(std::ostringstream& fail) {
    Rng rng(606);
    double worst = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        trainer::Network net =
            trainer::Network::make(5, {8, 6}, 3, trainer::BnMode::Dual, 9000 + pair);
        trainer::Batch real, syn;
        real.domain = dataset::Domain::Real;
        syn.domain = dataset::Domain::Synthetic;
        real.features = Mat(6, 5);
        syn.features = Mat(5, 5);
        for (double& v : real.features.a) v = rng.normal();
        for (double& v : syn.features.a) v = rng.normal();
        for (int i = 0; i < 6; ++i) real.labels.push_back(static_cast<int>(rng.below(3)));
        for (int i = 0; i < 5; ++i) syn.labels.push_back(static_cast<int>(rng.below(3)));
        worst = std::max(worst, trainer::grad_check(net, real, syn, 0.6));
    }
    std::ostringstream detail;
    detail << "max relative error " << worst << " <= 1e-5";
    EXPECT(worst <= 1e-5, detail.str());
}

// ── 7. BN isolation ──────────────────────────────────────────────────

void criterion_bn_isolation(std::ostringstream& fail) {
    Rng rng(707);
    auto run_steps = [&](dataset::Domain domain, trainer::Network& net) {
        trainer::SgdOpt opt(0.05, 0.9);
        for (int step = 0; step < 100; ++step) {
            trainer::Batch b;
            b.domain = domain;
            b.features = Mat(8, 4);
            for (double& v : b.features.a) v = rng.normal() * 2.0 + 0.5;
            for (int i = 0; i < 8; ++i) b.labels.push_back(static_cast<int>(rng.below(3)));
            trainer::ForwardCache cache;
            Mat logits = trainer::forward(net, b.features, domain, trainer::Phase::Train, &cache);
            auto ce = trainer::cross_entropy(logits, b.labels);
            auto params = trainer::collect_params(net);
            auto grads = trainer::GradBuffer::zeros_like(params);
            trainer::backward_accumulate(net, cache, ce.dlogits, domain, 1.0, grads);
            opt.step(params, grads);
        }
    };

    // Synthetic-domain steps must leave the real branch bitwise intact.
    {
        trainer::Network net = trainer::Network::make(4, {6, 5}, 3, trainer::BnMode::Dual, 51);
        std::vector<std::vector<double>> mean0, var0, gamma0, beta0;
        for (const auto& bn : net.bn) {
            mean0.push_back(bn.running_mean[0]);
            var0.push_back(bn.running_var[0]);
            gamma0.push_back(bn.gamma[0]);
            beta0.push_back(bn.beta[0]);
        }
        run_steps(dataset::Domain::Synthetic, net);
        for (size_t i = 0; i < net.bn.size(); ++i) {
            EXPECT(bits_equal(net.bn[i].running_mean[0], mean0[i]), "real running mean untouched");
            EXPECT(bits_equal(net.bn[i].running_var[0], var0[i]), "real running var untouched");
            EXPECT(bits_equal(net.bn[i].gamma[0], gamma0[i]), "real gamma untouched");
            EXPECT(bits_equal(net.bn[i].beta[0], beta0[i]), "real beta untouched");
        }
        EXPECT(!bits_equal(net.bn[0].running_mean[1],
                           std::vector<double>(net.bn[0].running_mean[1].size(), 0.0)),
               "synthetic branch did update");
    }
    // And symmetrically for real-domain steps.
    {
        trainer::Network net = trainer::Network::make(4, {6, 5}, 3, trainer::BnMode::Dual, 52);
        std::vector<std::vector<double>> mean1, var1, gamma1, beta1;
        for (const auto& bn : net.bn) {
            mean1.push_back(bn.running_mean[1]);
            var1.push_back(bn.running_var[1]);
            gamma1.push_back(bn.gamma[1]);
            beta1.push_back(bn.beta[1]);
        }
        run_steps(dataset::Domain::Real, net);
        for (size_t i = 0; i < net.bn.size(); ++i) {
            EXPECT(bits_equal(net.bn[i].running_mean[1], mean1[i]),
                   "synthetic running mean untouched");
            EXPECT(bits_equal(net.bn[i].running_var[1], var1[i]),
                   "synthetic running var untouched");
            EXPECT(bits_equal(net.bn[i].gamma[1], gamma1[i]), "synthetic gamma untouched");
            EXPECT(bits_equal(net.bn[i].beta[1], beta1[i]), "synthetic beta untouched");
        }
    }
}

// ── 8. Separate-BN qualitative ordering ──────────────────────────────

void criterion_dual_bn_ordering(std::ostringstream& fail) {
    std::vector<double> dual_acc, vanilla_acc;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        auto toy = dataset::make_two_domain_toy(seed, 500, 2, 2.0, 3.0);
        auto holdout = dataset::make_two_domain_toy(seed + 5000, 500, 2, 2.0, 3.0);
        trainer::LabeledData real{toy.real.x, toy.real.labels};
        trainer::LabeledData syn{toy.synthetic.x, toy.synthetic.labels};
        std::optional<trainer::LabeledData> eval_set =
            trainer::LabeledData{holdout.real.x, holdout.real.labels};
        for (int mode = 0; mode < 2; ++mode) {
            trainer::TrainConfig cfg;
            cfg.epochs = 6;
            cfg.plan = dataset::BatchPlan::make(32, 0.5, seed);
            cfg.bn_mode = mode == 0 ? trainer::BnMode::Dual : trainer::BnMode::Vanilla;
            cfg.seed = seed;
            trainer::Network net = trainer::Network::make(2, {16}, 2, cfg.bn_mode, seed);
            auto history = trainer::train(net, real, syn, eval_set, cfg);
            (mode == 0 ? dual_acc : vanilla_acc).push_back(history.back().eval_acc);
        }
    }
    std::sort(dual_acc.begin(), dual_acc.end());
    std::sort(vanilla_acc.begin(), vanilla_acc.end());
    std::ostringstream detail;
    detail << "median dual " << dual_acc[2] << " >= median vanilla " << vanilla_acc[2];
    EXPECT(dual_acc[2] >= vanilla_acc[2], detail.str());
}

// ── 9. Lambda 0 degenerate point ─────────────────────────────────────

void criterion_lambda_zero(std::ostringstream& fail) {
    auto toy = dataset::make_two_domain_toy(909, 128, 2, 2.0, 3.0);
    trainer::LabeledData real{toy.real.x, toy.real.labels};
    trainer::LabeledData syn{toy.synthetic.x, toy.synthetic.labels};
    trainer::LabeledData empty{Mat(0, 2), {}};

    trainer::TrainConfig cfg;
    cfg.lambda = 0.0;
    cfg.epochs = 4;
    cfg.plan = dataset::BatchPlan::make(16, 0.5, 42);
    cfg.seed = 42;

    trainer::Network with_syn = trainer::Network::make(2, {8}, 2, trainer::BnMode::Dual, 31);
    trainer::Network real_only = trainer::Network::make(2, {8}, 2, trainer::BnMode::Dual, 31);
    trainer::train(with_syn, real, syn, std::nullopt, cfg);
    trainer::train(real_only, real, empty, std::nullopt, cfg);

    bool equal = true;
    for (size_t i = 0; i < with_syn.hidden.size(); ++i) {
        equal = equal && bits_equal(with_syn.hidden[i].weight.a, real_only.hidden[i].weight.a);
        equal = equal && bits_equal(with_syn.hidden[i].bias, real_only.hidden[i].bias);
    }
    equal = equal && bits_equal(with_syn.output.weight.a, real_only.output.weight.a);
    equal = equal && bits_equal(with_syn.output.bias, real_only.output.bias);
    EXPECT(equal, "lambda=0 shared weights match the real-only trajectory exactly");
}

// ── 10. Inception Score ──────────────────────────────────────────────

void criterion_inception_score(std::ostringstream& fail) {
    Mat uniform(6, 4, 0.25);
    auto u = metrics::inception_score(uniform, 1);
    EXPECT(std::fabs(u.mean - 1.0) <= 1e-9, "uniform matrix scores 1.0 within 1e-9");

    Mat onehot(40, 10, 0.0);
    for (int i = 0; i < 40; ++i) onehot.at(i, i % 10) = 1.0;
    auto o = metrics::inception_score(onehot, 1);
    EXPECT(std::fabs(o.mean - 10.0) <= 1e-6, "balanced one-hot C=10 scores 10.0 within 1e-6");

    Mat hand(2, 2, 0.0);
    hand.at(0, 0) = 0.9;
    hand.at(0, 1) = 0.1;
    hand.at(1, 0) = 0.1;
    hand.at(1, 1) = 0.9;
    auto h = metrics::inception_score(hand, 1);
    EXPECT(std::fabs(h.mean - 1.4449) <= 1e-3, "[[0.9,0.1],[0.1,0.9]] scores 1.4449 within 1e-3");

    Rng rng(1010);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 2 + static_cast<int>(rng.below(40));
        int c = 2 + static_cast<int>(rng.below(10));
        Mat p(n, c);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < c; ++j) {
                p.at(i, j) = -std::log(1.0 - rng.uniform01());
                sum += p.at(i, j);
            }
            for (int j = 0; j < c; ++j) p.at(i, j) /= sum;
            double s2 = 0.0;
            for (int j = 0; j < c; ++j) s2 += p.at(i, j);
            p.at(i, c - 1) += 1.0 - s2;
        }
        auto r = metrics::inception_score(p, 1);
        if (r.mean < 1.0 - 1e-9 || r.mean > c + 1e-9) {
            fail << "\n    score " << r.mean << " escaped [1, " << c << "]";
        }
    }

    double prev = 0.0;
    for (int m = 1; m <= 10; ++m) {
        Mat p(10 * m, 10, 0.0);
        for (int i = 0; i < p.rows; ++i) p.at(i, i % m) = 1.0;
        auto r = metrics::inception_score(p, 1);
        if (std::fabs(r.mean - m) > 1e-6) fail << "\n    one-hot over " << m << " classes != " << m;
        if (r.mean <= prev - 1e-12) fail << "\n    score not monotone at m=" << m;
        prev = r.mean;
    }
}

// ── 11. End-to-end offline ───────────────────────────────────────────

void criterion_e2e(std::ostringstream& fail) {
    pipeline::PipelineConfig cfg; // standard defaults: 1024 -> 256, 600 prompts
    cfg.seed = 11;
    for (const char* id : {"crane", "goldfish", "leopard", "pretzel", "retriever"}) {
        pipeline::ClassSpec spec;
        spec.id = id;
        spec.name = id;
        cfg.classes.push_back(spec);
    }
    cfg.classes[0].candidates = {"a large long-legged bird", "a large machine used for lifting"};
    cfg.quota_per_class = 20;
    cfg.toy.n_per_class_per_domain = 100;
    cfg.trainer.epochs = 4;
    cfg.batch_size = 16;

    fs::path dir = fs::temp_directory_path() / "divgen_acceptance_e2e";
    fs::remove_all(dir);
    auto first = pipeline::e2e_offline(cfg, dir);
    EXPECT(first.new_generations == 100, "5 classes x 20 images -> 100 generations");
    EXPECT(first.manifest.size() == 100, "manifest holds 100 entries");
    int checksum_failures = 0;
    for (const auto& e : first.manifest) {
        std::ifstream img(dir / e.path, std::ios::binary);
        std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(img)),
                                   std::istreambuf_iterator<char>());
        if (to_hex64(fnv1a64_bytes(bytes.data(), bytes.size())) != e.checksum) ++checksum_failures;
    }
    EXPECT(checksum_failures == 0, "all 100 checksums verify");

    auto second = pipeline::e2e_offline(cfg, dir);
    EXPECT(second.new_generations == 0, "immediate rerun performs 0 generations");
    EXPECT(second.manifest.size() == 100, "manifest unchanged on rerun");
}

// ── 12. Generation parameters ────────────────────────────────────────

void criterion_generation_parameters(std::ostringstream& fail) {
    promptgen::MockLlmClient client(3);
    auto corpus = promptgen::generate_prompt_corpus("crane", "crane", std::nullopt, client, 40);
    for (int quota : {2, 10, 20, 64}) {
        auto jobs = generation::plan_jobs("crane", corpus, quota, 7);
        int cd = 0, sd = 0;
        for (const auto& job : jobs) {
            if (job.guidance_scale != 2.0 || job.steps != 50 || job.width != 1024 ||
                job.height != 1024 || job.target_resolution != 256) {
                fail << "\n    job " << job.job_id << " deviates from the generation defaults";
            }
            (job.prompt.kind == promptgen::PromptKind::CD ? cd : sd)++;
        }
        if (cd != sd) fail << "\n    even quota " << quota << " split " << cd << "/" << sd;
    }

    // The e2e manifest of criterion 11 must carry the same parameters.
    fs::path manifest_path = fs::temp_directory_path() / "divgen_acceptance_e2e" / "manifest.jsonl";
    auto manifest = dataset::read_manifest(manifest_path);
    std::string expected_header = "P6\n256 256\n255\n";
    int bad_params = 0, bad_headers = 0;
    for (const auto& e : manifest) {
        if (!e.provenance || e.provenance->guidance_scale != 2.0 || e.provenance->steps != 50) {
            ++bad_params;
        }
        std::ifstream img(fs::temp_directory_path() / "divgen_acceptance_e2e" / e.path,
                          std::ios::binary);
        std::string header(expected_header.size(), '\0');
        img.read(header.data(), static_cast<std::streamsize>(header.size()));
        if (header != expected_header) ++bad_headers;
    }
    EXPECT(bad_params == 0, "every manifest entry generated at guidance 2.0 / 50 steps");
    EXPECT(bad_headers == 0, "every stored image is a 256x256 PPM after 1024 -> 256 downsampling");
}

} // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "Ambiguity resolution: 1000 random instances match brute force", criterion_lar_oracle},
        {2, "Prompt grammar: 600 unique CD prompts per class + goldfish example",
         criterion_prompt_grammar},
        {3, "Style fidelity: canonical 60 styles, SD bodies byte-identical",
         criterion_style_fidelity},
        {4, "Long-tail formula: exact counts and monotonicity", criterion_long_tail},
        {5, "Batch composition: exact 32/32 split, deterministic, w=0 all-real",
         criterion_batch_composition},
        {6, "Gradient check: dual-BN net vs central differences <= 1e-5", criterion_grad_check},
        {7, "BN isolation: cross-domain branches bitwise untouched", criterion_bn_isolation},
        {8, "Separate-BN ordering: median dual >= vanilla on shifted toy data",
         criterion_dual_bn_ordering},
        {9, "Lambda 0: shared weights reproduce the real-only trajectory", criterion_lambda_zero},
        {10, "Inception Score: identities, bounds, monotone diversity",
         criterion_inception_score},
        {11, "End-to-end offline: 100 entries, checksums, resumable rerun", criterion_e2e},
        {12, "Generation parameters: guidance 2.0, 50 steps, 1024 -> 256, balanced split",
         criterion_generation_parameters},
    };

    const std::vector<double> budgets = {1.0, 5.0, 0.0, 0.0, 0.0, 10.0,
                                         0.0, 30.0, 0.0, 0.0, 60.0, 0.0};

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        std::ostringstream fail;
        auto start = std::chrono::steady_clock::now();
        try {
            c.run(fail);
        } catch (const std::exception& e) {
            fail << "\n    exception: " << e.what();
        }
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (budgets[i] > 0.0 && seconds > budgets[i]) {
            fail << "\n    exceeded time budget: " << seconds << "s > " << budgets[i] << "s";
        }
        bool ok = fail.str().empty();
        if (!ok) ++failures;
        std::ostringstream line;
        line.setf(std::ios::fixed);
        line.precision(2);
        line << (ok ? "[PASS] " : "[FAIL] ") << c.number << ". " << c.name << " (" << seconds
             << "s)";
        std::cout << line.str() << fail.str() << std::endl;
    }
    if (failures == 0) {
        std::cout << "All 12 acceptance criteria passed." << std::endl;
    } else {
        std::cout << failures << " criterion(s) failed." << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
