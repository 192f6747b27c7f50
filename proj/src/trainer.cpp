#include "divgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "divgen/rng.hpp"
#include "json.hpp"

namespace divgen::trainer {

namespace {

int branch_count(BnMode mode) { return mode == BnMode::Dual ? 2 : 1; }

// Slot layout per hidden stage: weight, then gamma/beta per branch;
// the output affine takes the last two slots. Hidden biases are not
// learnable: the train-phase BN right behind them subtracts the batch
// mean, which cancels any uniform column shift, so the loss is exactly
// invariant to them (BN's beta plays that role instead). They stay at
// zero. collect_params, backward_accumulate, and the optimizer all
// rely on this order.
int slots_per_stage(BnMode mode) { return 1 + 2 * branch_count(mode); }

Mat affine_forward(const AffineLayer& layer, const Mat& x) {
    if (x.cols != layer.weight.rows) {
        raise("DimMismatch", "affine expects " + std::to_string(layer.weight.rows) +
                                 " features, got " + std::to_string(x.cols));
    }
    Mat y(x.rows, layer.weight.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int k = 0; k < x.cols; ++k) {
            double xv = x.at(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < layer.weight.cols; ++j) {
                y.at(i, j) += xv * layer.weight.at(k, j);
            }
        }
        for (int j = 0; j < layer.weight.cols; ++j) y.at(i, j) += layer.bias[static_cast<size_t>(j)];
    }
    return y;
}

} // namespace

BnLayer BnLayer::make(int width, BnMode mode) {
    if (width < 1) raise("InvalidDim", "BN width must be >= 1");
    BnLayer layer;
    layer.mode = mode;
    for (int b = 0; b < 2; ++b) {
        layer.gamma[b].assign(static_cast<size_t>(width), 1.0);
        layer.beta[b].assign(static_cast<size_t>(width), 0.0);
        layer.running_mean[b].assign(static_cast<size_t>(width), 0.0);
        layer.running_var[b].assign(static_cast<size_t>(width), 1.0);
    }
    return layer;
}

Mat bn_forward(BnLayer& layer, const Mat& x, Domain domain, Phase phase, BnCache* cache,
               bool update_running) {
    if (x.cols != layer.width()) {
        raise("DimMismatch", "BN width " + std::to_string(layer.width()) + ", input has " +
                                 std::to_string(x.cols) + " columns");
    }
    const int b = layer.branch(domain);
    const int n = x.rows;
    const int w = x.cols;
    Mat y(n, w);

    if (phase == Phase::Eval) {
        for (int j = 0; j < w; ++j) {
            double inv = 1.0 / std::sqrt(layer.running_var[b][static_cast<size_t>(j)] + layer.eps);
            double mean = layer.running_mean[b][static_cast<size_t>(j)];
            double g = layer.gamma[b][static_cast<size_t>(j)];
            double be = layer.beta[b][static_cast<size_t>(j)];
            for (int i = 0; i < n; ++i) y.at(i, j) = g * (x.at(i, j) - mean) * inv + be;
        }
        return y;
    }

    if (n < 2) raise("BatchTooSmall", "train-phase BN needs at least 2 rows");

    if (cache) {
        cache->xhat = Mat(n, w);
        cache->inv_std.assign(static_cast<size_t>(w), 0.0);
        cache->branch = b;
    }
    for (int j = 0; j < w; ++j) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += x.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= n; // biased
        double inv = 1.0 / std::sqrt(var + layer.eps);
        double g = layer.gamma[b][static_cast<size_t>(j)];
        double be = layer.beta[b][static_cast<size_t>(j)];
        for (int i = 0; i < n; ++i) {
            double xh = (x.at(i, j) - mean) * inv;
            if (cache) cache->xhat.at(i, j) = xh;
            y.at(i, j) = g * xh + be;
        }
        if (cache) cache->inv_std[static_cast<size_t>(j)] = inv;
        if (update_running) {
            layer.running_mean[b][static_cast<size_t>(j)] =
                (1.0 - layer.momentum) * layer.running_mean[b][static_cast<size_t>(j)] +
                layer.momentum * mean;
            layer.running_var[b][static_cast<size_t>(j)] =
                (1.0 - layer.momentum) * layer.running_var[b][static_cast<size_t>(j)] +
                layer.momentum * var;
        }
    }
    return y;
}

Mat bn_backward(const BnLayer& layer, const BnCache& cache, const Mat& dy, BnGrads& grads) {
    const int n = dy.rows;
    const int w = dy.cols;
    const int b = cache.branch;
    grads.dgamma.assign(static_cast<size_t>(w), 0.0);
    grads.dbeta.assign(static_cast<size_t>(w), 0.0);
    Mat dx(n, w);
    for (int j = 0; j < w; ++j) {
        double g = layer.gamma[b][static_cast<size_t>(j)];
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
            double dyi = dy.at(i, j);
            double xh = cache.xhat.at(i, j);
            grads.dbeta[static_cast<size_t>(j)] += dyi;
            grads.dgamma[static_cast<size_t>(j)] += dyi * xh;
            double dxh = dyi * g;
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh;
        }
        double inv = cache.inv_std[static_cast<size_t>(j)];
        for (int i = 0; i < n; ++i) {
            double dxh = dy.at(i, j) * g;
            double xh = cache.xhat.at(i, j);
            dx.at(i, j) = inv / n * (n * dxh - sum_dxhat - xh * sum_dxhat_xhat);
        }
    }
    return dx;
}

Network Network::make(int input_dim, const std::vector<int>& hidden_widths, int num_classes,
                      BnMode mode, uint64_t seed) {
    if (input_dim < 1 || num_classes < 1) raise("InvalidDim", "bad network dimensions");
    Network net;
    net.input_dim = input_dim;
    net.num_classes = num_classes;
    net.bn_mode = mode;

    auto init_affine = [&](int fan_in, int fan_out, uint64_t layer_tag) {
        AffineLayer layer;
        layer.weight = Mat(fan_in, fan_out);
        layer.bias.assign(static_cast<size_t>(fan_out), 0.0);
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(fnv1a64_u64(layer_tag, fnv1a64("affine", fnv1a64_u64(seed))));
        for (double& v : layer.weight.a) v = rng.uniform(-limit, limit);
        return layer;
    };

    int in = input_dim;
    for (size_t i = 0; i < hidden_widths.size(); ++i) {
        int width = hidden_widths[i];
        if (width < 1) raise("InvalidDim", "hidden width must be >= 1");
        net.hidden.push_back(init_affine(in, width, i));
        net.bn.push_back(BnLayer::make(width, mode));
        in = width;
    }
    net.output = init_affine(in, num_classes, hidden_widths.size());
    return net;
}

std::vector<int> Network::hidden_widths() const {
    std::vector<int> widths;
    widths.reserve(hidden.size());
    for (const auto& h : hidden) widths.push_back(h.weight.cols);
    return widths;
}

Mat forward(Network& net, const Mat& x, Domain domain, Phase phase, ForwardCache* cache,
            bool update_running) {
    if (x.cols != net.input_dim) {
        raise("DimMismatch", "network expects " + std::to_string(net.input_dim) +
                                 " features, got " + std::to_string(x.cols));
    }
    if (cache) {
        cache->layers.clear();
        cache->layers.resize(net.hidden.size());
    }
    Mat h = x;
    for (size_t i = 0; i < net.hidden.size(); ++i) {
        LayerCache* lc = cache ? &cache->layers[i] : nullptr;
        if (lc) lc->input = h;
        Mat z = affine_forward(net.hidden[i], h);
        Mat bn_out = bn_forward(net.bn[i], z, domain, phase, lc ? &lc->bn : nullptr,
                                phase == Phase::Train && update_running);
        if (lc) lc->relu_in = bn_out;
        for (double& v : bn_out.a) v = v > 0.0 ? v : 0.0;
        h = std::move(bn_out);
    }
    if (cache) cache->last_hidden = h;
    return affine_forward(net.output, h);
}

CeResult cross_entropy(const Mat& logits, const std::vector<int>& labels) {
    const int n = logits.rows;
    const int c = logits.cols;
    if (static_cast<int>(labels.size()) != n) {
        raise("DimMismatch", "labels and logits row counts differ");
    }
    if (n == 0) raise("Empty", "cross entropy over zero rows");
    for (int lab : labels) {
        if (lab < 0 || lab >= c) {
            raise("LabelOutOfRange", "label " + std::to_string(lab) + " outside [0, " +
                                         std::to_string(c) + ")");
        }
    }
    CeResult out;
    out.dlogits = Mat(n, c);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(logits.at(i, j) - mx);
        double log_sum = std::log(sum);
        int lab = labels[static_cast<size_t>(i)];
        total += log_sum - (logits.at(i, lab) - mx);
        for (int j = 0; j < c; ++j) {
            double soft = std::exp(logits.at(i, j) - mx) / sum;
            out.dlogits.at(i, j) = (soft - (j == lab ? 1.0 : 0.0)) / n;
        }
    }
    out.loss = total / n;
    return out;
}

std::vector<ParamView> collect_params(Network& net) {
    std::vector<ParamView> params;
    const int branches = branch_count(net.bn_mode);
    for (size_t i = 0; i < net.hidden.size(); ++i) {
        params.push_back({net.hidden[i].weight.a.data(), net.hidden[i].weight.a.size()});
        for (int b = 0; b < branches; ++b) {
            params.push_back({net.bn[i].gamma[b].data(), net.bn[i].gamma[b].size()});
            params.push_back({net.bn[i].beta[b].data(), net.bn[i].beta[b].size()});
        }
    }
    params.push_back({net.output.weight.a.data(), net.output.weight.a.size()});
    params.push_back({net.output.bias.data(), net.output.bias.size()});
    return params;
}

GradBuffer GradBuffer::zeros_like(const std::vector<ParamView>& params) {
    GradBuffer g;
    g.slots.reserve(params.size());
    for (const auto& p : params) g.slots.emplace_back(p.size, 0.0);
    return g;
}

void GradBuffer::clear() {
    for (auto& s : slots) std::fill(s.begin(), s.end(), 0.0);
}

void backward_accumulate(const Network& net, const ForwardCache& cache, const Mat& dlogits,
                         Domain domain, double weight, GradBuffer& grads) {
    (void)domain; // the branch comes from the forward cache
    const int per_stage = slots_per_stage(net.bn_mode);
    const size_t out_w_slot = net.hidden.size() * static_cast<size_t>(per_stage);

    Mat dl = dlogits;
    for (double& v : dl.a) v *= weight;

    // Output affine.
    const Mat& last = cache.last_hidden;
    auto& dW_out = grads.slots[out_w_slot];
    auto& db_out = grads.slots[out_w_slot + 1];
    for (int i = 0; i < dl.rows; ++i) {
        for (int j = 0; j < dl.cols; ++j) {
            double d = dl.at(i, j);
            if (d == 0.0) continue;
            db_out[static_cast<size_t>(j)] += d;
            for (int k = 0; k < last.cols; ++k) {
                dW_out[static_cast<size_t>(k) * dl.cols + static_cast<size_t>(j)] +=
                    last.at(i, k) * d;
            }
        }
    }
    Mat dh(dl.rows, last.cols);
    for (int i = 0; i < dl.rows; ++i) {
        for (int k = 0; k < last.cols; ++k) {
            double acc = 0.0;
            for (int j = 0; j < dl.cols; ++j) acc += dl.at(i, j) * net.output.weight.at(k, j);
            dh.at(i, k) = acc;
        }
    }

    for (size_t si = net.hidden.size(); si-- > 0;) {
        const LayerCache& lc = cache.layers[si];
        // ReLU.
        for (int i = 0; i < dh.rows; ++i) {
            for (int j = 0; j < dh.cols; ++j) {
                if (lc.relu_in.at(i, j) <= 0.0) dh.at(i, j) = 0.0;
            }
        }
        // BN: gradients land in the branch this pass actually used.
        BnGrads bn_grads;
        Mat dz = bn_backward(net.bn[si], lc.bn, dh, bn_grads);
        const size_t base = si * static_cast<size_t>(per_stage);
        const size_t gamma_slot = base + 1 + 2 * static_cast<size_t>(lc.bn.branch);
        auto& dg = grads.slots[gamma_slot];
        auto& db = grads.slots[gamma_slot + 1];
        for (size_t j = 0; j < dg.size(); ++j) {
            dg[j] += bn_grads.dgamma[j];
            db[j] += bn_grads.dbeta[j];
        }
        // Affine weight only; the hidden bias is not a parameter.
        auto& dW = grads.slots[base];
        const Mat& input = lc.input;
        for (int i = 0; i < dz.rows; ++i) {
            for (int j = 0; j < dz.cols; ++j) {
                double d = dz.at(i, j);
                if (d == 0.0) continue;
                for (int k = 0; k < input.cols; ++k) {
                    dW[static_cast<size_t>(k) * dz.cols + static_cast<size_t>(j)] +=
                        input.at(i, k) * d;
                }
            }
        }
        if (si > 0) {
            Mat dnext(dz.rows, input.cols);
            for (int i = 0; i < dz.rows; ++i) {
                for (int k = 0; k < input.cols; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j < dz.cols; ++j) {
                        acc += dz.at(i, j) * net.hidden[si].weight.at(k, j);
                    }
                    dnext.at(i, k) = acc;
                }
            }
            dh = std::move(dnext);
        }
    }
}

void SgdOpt::step(const std::vector<ParamView>& params, const GradBuffer& grads) {
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (const auto& p : params) velocity_.emplace_back(p.size, 0.0);
    }
    if (velocity_.size() != params.size()) raise("DimMismatch", "optimizer state mismatch");
    for (size_t s = 0; s < params.size(); ++s) {
        auto& v = velocity_[s];
        const auto& g = grads.slots[s];
        double* p = params[s].data;
        for (size_t i = 0; i < params[s].size; ++i) {
            v[i] = momentum_ * v[i] - lr_ * g[i];
            p[i] += v[i];
        }
    }
}

StepResult combined_step(Network& net, SgdOpt& opt, const Batch& real_batch,
                         const Batch& syn_batch, const TrainConfig& config) {
    if (real_batch.domain != Domain::Real) raise("DomainMismatch", "first batch must be real");
    if (syn_batch.domain != Domain::Synthetic) {
        raise("DomainMismatch", "second batch must be synthetic");
    }
    if (config.lambda < 0.0) raise("InvalidLambda", "lambda must be >= 0");

    ForwardCache real_cache;
    Mat real_logits = forward(net, real_batch.features, Domain::Real, Phase::Train, &real_cache);
    CeResult real_ce = cross_entropy(real_logits, real_batch.labels);

    ForwardCache syn_cache;
    Mat syn_logits =
        forward(net, syn_batch.features, Domain::Synthetic, Phase::Train, &syn_cache);
    CeResult syn_ce = cross_entropy(syn_logits, syn_batch.labels);

    auto params = collect_params(net);
    GradBuffer grads = GradBuffer::zeros_like(params);
    backward_accumulate(net, real_cache, real_ce.dlogits, Domain::Real, 1.0, grads);
    backward_accumulate(net, syn_cache, syn_ce.dlogits, Domain::Synthetic, config.lambda, grads);
    opt.step(params, grads);

    StepResult out;
    out.real_loss = real_ce.loss;
    out.syn_loss = syn_ce.loss;
    out.loss = real_ce.loss + config.lambda * syn_ce.loss;
    return out;
}

double real_only_step(Network& net, SgdOpt& opt, const Batch& real_batch,
                      const TrainConfig& config) {
    if (real_batch.domain != Domain::Real) raise("DomainMismatch", "batch must be real");
    (void)config;
    ForwardCache cache;
    Mat logits = forward(net, real_batch.features, Domain::Real, Phase::Train, &cache);
    CeResult ce = cross_entropy(logits, real_batch.labels);
    auto params = collect_params(net);
    GradBuffer grads = GradBuffer::zeros_like(params);
    backward_accumulate(net, cache, ce.dlogits, Domain::Real, 1.0, grads);
    opt.step(params, grads);
    return ce.loss;
}

double grad_check(Network& net, const Batch& real_batch, const Batch& syn_batch, double lambda,
                  double epsilon) {
    if (!(epsilon > 0.0)) raise("InvalidEpsilon", "epsilon must be > 0");

    auto loss_of = [&]() {
        Mat rl = forward(net, real_batch.features, Domain::Real, Phase::Train, nullptr, false);
        double loss = cross_entropy(rl, real_batch.labels).loss;
        Mat sl =
            forward(net, syn_batch.features, Domain::Synthetic, Phase::Train, nullptr, false);
        loss += lambda * cross_entropy(sl, syn_batch.labels).loss;
        return loss;
    };

    ForwardCache real_cache, syn_cache;
    Mat rl = forward(net, real_batch.features, Domain::Real, Phase::Train, &real_cache, false);
    CeResult real_ce = cross_entropy(rl, real_batch.labels);
    Mat sl = forward(net, syn_batch.features, Domain::Synthetic, Phase::Train, &syn_cache, false);
    CeResult syn_ce = cross_entropy(sl, syn_batch.labels);

    auto params = collect_params(net);
    GradBuffer grads = GradBuffer::zeros_like(params);
    backward_accumulate(net, real_cache, real_ce.dlogits, Domain::Real, 1.0, grads);
    backward_accumulate(net, syn_cache, syn_ce.dlogits, Domain::Synthetic, lambda, grads);

    double max_rel = 0.0;
    for (size_t s = 0; s < params.size(); ++s) {
        double* base = params[s].data;
        for (size_t i = 0; i < params[s].size; ++i) {
            double saved = base[i];
            base[i] = saved + epsilon;
            double lp = loss_of();
            base[i] = saved - epsilon;
            double lm = loss_of();
            base[i] = saved;
            double numeric = (lp - lm) / (2.0 * epsilon);
            double analytic = grads.slots[s][i];
            double rel = std::fabs(analytic - numeric) /
                         std::max({std::fabs(analytic), std::fabs(numeric), 1e-12});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

namespace {

Batch slice_batch(const LabeledData& data, const std::vector<size_t>& idx, Domain domain) {
    Batch b;
    b.domain = domain;
    b.features = Mat(static_cast<int>(idx.size()), data.x.cols);
    b.labels.reserve(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
        for (int c = 0; c < data.x.cols; ++c) {
            b.features.at(static_cast<int>(r), c) = data.x.at(static_cast<int>(idx[r]), c);
        }
        b.labels.push_back(data.labels[idx[r]]);
    }
    return b;
}

} // namespace

double evaluate_accuracy(Network& net, const LabeledData& data, Domain bn_domain) {
    if (data.x.rows == 0) raise("Empty", "cannot evaluate on zero rows");
    Mat logits = forward(net, data.x, bn_domain, Phase::Eval, nullptr, false);
    int correct = 0;
    for (int i = 0; i < logits.rows; ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols; ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        if (best == data.labels[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / logits.rows;
}

std::vector<EpochStats> train(Network& net, const LabeledData& real, const LabeledData& synthetic,
                              const std::optional<LabeledData>& eval_set,
                              const TrainConfig& config) {
    if (real.x.rows == 0) raise("Empty", "real training data is empty");
    const bool use_syn = config.plan.n_syn_per_batch > 0 && synthetic.x.rows > 0;

    SgdOpt opt(config.learning_rate, config.sgd_momentum);
    std::vector<EpochStats> history;
    history.reserve(static_cast<size_t>(config.epochs));

    dataset::BatchPlan plan = config.plan;
    if (!use_syn) {
        // Real-only schedule: keep the combined plan's real chunk size
        // so a lambda=0 run and a real-only run see identical batches.
        int real_per_batch = config.plan.batch_size - config.plan.n_syn_per_batch;
        if (real_per_batch < 1) raise("InvalidBatchSize", "no real slots in the batch plan");
        plan = dataset::BatchPlan::make(real_per_batch, 0.0, config.plan.seed);
    }

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto batches = dataset::compose_index_batches(static_cast<size_t>(real.x.rows),
                                                      static_cast<size_t>(synthetic.x.rows), plan,
                                                      epoch);
        double loss_sum = 0.0;
        size_t steps = 0;
        for (const auto& ib : batches) {
            Batch rb = slice_batch(real, ib.real, Domain::Real);
            if (use_syn) {
                Batch sb = slice_batch(synthetic, ib.synthetic, Domain::Synthetic);
                loss_sum += combined_step(net, opt, rb, sb, config).loss;
            } else {
                loss_sum += real_only_step(net, opt, rb, config);
            }
            ++steps;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
        stats.eval_acc =
            eval_set ? evaluate_accuracy(net, *eval_set, config.eval_bn_domain) : 0.0;
        history.push_back(stats);
    }
    return history;
}

Mat extract_features(Network& net, const Mat& inputs, Domain bn_domain) {
    if (inputs.cols != net.input_dim) {
        raise("DimMismatch", "network expects " + std::to_string(net.input_dim) +
                                 " features, got " + std::to_string(inputs.cols));
    }
    Mat h = inputs;
    for (size_t i = 0; i < net.hidden.size(); ++i) {
        Mat z = affine_forward(net.hidden[i], h);
        Mat bn_out = bn_forward(net.bn[i], z, bn_domain, Phase::Eval, nullptr, false);
        for (double& v : bn_out.a) v = v > 0.0 ? v : 0.0;
        h = std::move(bn_out);
    }
    return h;
}

ProbeResult linear_probe(const Mat& features, const std::vector<int>& labels,
                         const ProbeConfig& config) {
    if (features.rows == 0) raise("Empty", "no features to probe");
    if (static_cast<int>(labels.size()) != features.rows) {
        raise("DimMismatch", "labels and features row counts differ");
    }
    for (double v : features.a) {
        if (!std::isfinite(v)) raise("NonFiniteValue", "features must be finite");
    }
    int classes = 0;
    for (int lab : labels) classes = std::max(classes, lab + 1);
    if (classes < 2) classes = 2;

    ProbeResult out;
    out.classifier = Network::make(features.cols, {}, classes, BnMode::Vanilla, config.seed);
    SgdOpt opt(config.learning_rate, config.momentum);
    TrainConfig step_config;

    LabeledData data{features, labels};
    std::vector<size_t> order(static_cast<size_t>(features.rows));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(fnv1a64_u64(static_cast<uint64_t>(epoch), fnv1a64("probe", fnv1a64_u64(config.seed))));
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(end));
            Batch b = slice_batch(data, idx, Domain::Real);
            real_only_step(out.classifier, opt, b, step_config);
        }
    }
    out.accuracy = evaluate_accuracy(out.classifier, data, Domain::Real);
    return out;
}

// ── Checkpoints ──────────────────────────────────────────────────────

namespace {

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols; ++j) row.push_back(m.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const nlohmann::json& j) {
    Mat m(static_cast<int>(j.size()), j.empty() ? 0 : static_cast<int>(j[0].size()));
    for (int i = 0; i < m.rows; ++i) {
        for (int jj = 0; jj < m.cols; ++jj) m.at(i, jj) = j[static_cast<size_t>(i)][static_cast<size_t>(jj)].get<double>();
    }
    return m;
}

nlohmann::json affine_to_json(const AffineLayer& layer) {
    return {{"weight", mat_to_json(layer.weight)}, {"bias", layer.bias}};
}

AffineLayer affine_from_json(const nlohmann::json& j) {
    AffineLayer layer;
    layer.weight = mat_from_json(j.at("weight"));
    layer.bias = j.at("bias").get<std::vector<double>>();
    return layer;
}

} // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const TrainConfig& config) {
    nlohmann::json j;
    j["input_dim"] = net.input_dim;
    j["num_classes"] = net.num_classes;
    j["bn_mode"] = net.bn_mode == BnMode::Dual ? "dual" : "vanilla";
    j["hidden_widths"] = net.hidden_widths();
    j["config"] = {
        {"learning_rate", config.learning_rate},
        {"sgd_momentum", config.sgd_momentum},
        {"lambda", config.lambda},
        {"epochs", config.epochs},
        {"batch_size", config.plan.batch_size},
        {"sampling_weight", config.plan.sampling_weight},
        {"bn_mode", config.bn_mode == BnMode::Dual ? "dual" : "vanilla"},
        {"eval_bn_domain", config.eval_bn_domain == Domain::Real ? "real" : "synthetic"},
        {"seed", config.seed},
    };
    nlohmann::json stages = nlohmann::json::array();
    for (size_t i = 0; i < net.hidden.size(); ++i) {
        nlohmann::json stage;
        stage["affine"] = affine_to_json(net.hidden[i]);
        const BnLayer& bn = net.bn[i];
        stage["bn"] = {{"momentum", bn.momentum},
                       {"eps", bn.eps},
                       {"gamma", {bn.gamma[0], bn.gamma[1]}},
                       {"beta", {bn.beta[0], bn.beta[1]}},
                       {"running_mean", {bn.running_mean[0], bn.running_mean[1]}},
                       {"running_var", {bn.running_var[0], bn.running_var[1]}}};
        stages.push_back(std::move(stage));
    }
    j["stages"] = std::move(stages);
    j["output"] = affine_to_json(net.output);

    std::ofstream out(path);
    if (!out) raise("IoError", "cannot open checkpoint for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) raise("IoError", "checkpoint write failed: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise("IoError", "cannot open checkpoint: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) raise("CheckpointParseError", "not valid JSON: " + path.string());
    try {
        Network net;
        net.input_dim = j.at("input_dim").get<int>();
        net.num_classes = j.at("num_classes").get<int>();
        net.bn_mode = j.at("bn_mode").get<std::string>() == "dual" ? BnMode::Dual : BnMode::Vanilla;
        for (const auto& stage : j.at("stages")) {
            net.hidden.push_back(affine_from_json(stage.at("affine")));
            const auto& bj = stage.at("bn");
            BnLayer bn = BnLayer::make(net.hidden.back().weight.cols, net.bn_mode);
            bn.momentum = bj.at("momentum").get<double>();
            bn.eps = bj.at("eps").get<double>();
            for (int b = 0; b < 2; ++b) {
                bn.gamma[b] = bj.at("gamma")[static_cast<size_t>(b)].get<std::vector<double>>();
                bn.beta[b] = bj.at("beta")[static_cast<size_t>(b)].get<std::vector<double>>();
                bn.running_mean[b] =
                    bj.at("running_mean")[static_cast<size_t>(b)].get<std::vector<double>>();
                bn.running_var[b] =
                    bj.at("running_var")[static_cast<size_t>(b)].get<std::vector<double>>();
            }
            net.bn.push_back(std::move(bn));
        }
        net.output = affine_from_json(j.at("output"));
        return net;
    } catch (const nlohmann::json::exception& ex) {
        raise("CheckpointParseError", std::string("bad checkpoint layout: ") + ex.what());
    }
}

TrainConfig checkpoint_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise("IoError", "cannot open checkpoint: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("config")) {
        raise("CheckpointParseError", "checkpoint has no config block: " + path.string());
    }
    const auto& cj = j["config"];
    TrainConfig config;
    config.learning_rate = cj.value("learning_rate", config.learning_rate);
    config.sgd_momentum = cj.value("sgd_momentum", config.sgd_momentum);
    config.lambda = cj.value("lambda", config.lambda);
    config.epochs = cj.value("epochs", config.epochs);
    config.plan = dataset::BatchPlan::make(cj.value("batch_size", 32),
                                           cj.value("sampling_weight", 0.5),
                                           cj.value("seed", uint64_t{0}));
    config.bn_mode = cj.value("bn_mode", std::string("dual")) == "vanilla" ? BnMode::Vanilla
                                                                           : BnMode::Dual;
    config.eval_bn_domain = cj.value("eval_bn_domain", std::string("real")) == "synthetic"
                                ? Domain::Synthetic
                                : Domain::Real;
    config.seed = cj.value("seed", uint64_t{0});
    return config;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) raise("IoError", "cannot open history csv: " + path.string());
    out << "epoch,loss,eval_acc\n";
    for (const auto& h : history) out << h.epoch << ',' << h.loss << ',' << h.eval_acc << '\n';
    if (!out) raise("IoError", "history write failed: " + path.string());
}

} // namespace divgen::trainer
