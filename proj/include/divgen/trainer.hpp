#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "divgen/dataset.hpp"
#include "divgen/error.hpp"
#include "divgen/mat.hpp"

namespace divgen::trainer {

using dataset::Domain;

enum class BnMode { Vanilla, Dual };
enum class Phase { Train, Eval };

// Batch normalization with one parameter/statistics set per domain.
// Vanilla mode routes both domains to set 0; dual mode keeps the
// synthetic domain fully separate (statistics and affine parameters).
struct BnLayer {
    BnMode mode = BnMode::Dual;
    double momentum = 0.1;
    double eps = 1e-5;
    // Index 0 = real, 1 = synthetic.
    std::array<std::vector<double>, 2> gamma, beta, running_mean, running_var;

    static BnLayer make(int width, BnMode mode);
    int width() const { return static_cast<int>(gamma[0].size()); }
    int branch(Domain d) const {
        return (mode == BnMode::Dual && d == Domain::Synthetic) ? 1 : 0;
    }
};

struct BnCache {
    Mat xhat;
    std::vector<double> inv_std;
    int branch = 0;
};

struct BnGrads {
    std::vector<double> dgamma, dbeta;
};

// Train phase normalizes with the batch's own statistics (biased
// variance) and updates the selected domain's running stats; eval phase
// normalizes with the requested domain's running stats.
Mat bn_forward(BnLayer& layer, const Mat& x, Domain domain, Phase phase,
               BnCache* cache = nullptr, bool update_running = true);

// Backward through a train-phase BN forward. Returns dx and fills
// dgamma/dbeta for the branch recorded in the cache.
Mat bn_backward(const BnLayer& layer, const BnCache& cache, const Mat& dy, BnGrads& grads);

struct AffineLayer {
    Mat weight; // in x out
    std::vector<double> bias;
};

struct Network {
    int input_dim = 0;
    int num_classes = 0;
    BnMode bn_mode = BnMode::Dual;
    std::vector<AffineLayer> hidden; // affine -> BN -> ReLU per stage
    std::vector<BnLayer> bn;         // bn[i] follows hidden[i]
    AffineLayer output;

    static Network make(int input_dim, const std::vector<int>& hidden_widths, int num_classes,
                        BnMode mode, uint64_t seed);
    std::vector<int> hidden_widths() const;
};

struct LayerCache {
    Mat input;    // affine input
    BnCache bn;
    Mat relu_in;  // BN output, pre-ReLU
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Mat last_hidden; // input to the output affine
};

Mat forward(Network& net, const Mat& x, Domain domain, Phase phase,
            ForwardCache* cache = nullptr, bool update_running = true);

struct CeResult {
    double loss = 0.0;
    Mat dlogits; // (softmax - onehot) / N
};

// Max-subtracted softmax cross entropy, mean over rows.
CeResult cross_entropy(const Mat& logits, const std::vector<int>& labels);

struct Batch {
    Mat features;
    std::vector<int> labels;
    Domain domain = Domain::Real;
};

struct TrainConfig {
    double learning_rate = 0.05;
    double sgd_momentum = 0.9;
    double lambda = 0.6; // synthetic loss weight
    int epochs = 10;
    dataset::BatchPlan plan = dataset::BatchPlan::make(32, 0.5, 0);
    BnMode bn_mode = BnMode::Dual;
    Domain eval_bn_domain = Domain::Real;
    uint64_t seed = 0;
};

// Mutable view over every learnable parameter, in a fixed order shared
// by the gradient buffer and the optimizer.
struct ParamView {
    double* data;
    size_t size;
};
std::vector<ParamView> collect_params(Network& net);

struct GradBuffer {
    std::vector<std::vector<double>> slots;

    static GradBuffer zeros_like(const std::vector<ParamView>& params);
    void clear();
};

// Backward pass for one domain-tagged forward; gradients are scaled by
// `weight` and accumulated into `grads`.
void backward_accumulate(const Network& net, const ForwardCache& cache, const Mat& dlogits,
                         Domain domain, double weight, GradBuffer& grads);

class SgdOpt {
public:
    SgdOpt(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

    // v <- mu * v - lr * g;  p <- p + v
    void step(const std::vector<ParamView>& params, const GradBuffer& grads);

private:
    double lr_;
    double momentum_;
    std::vector<std::vector<double>> velocity_;
};

struct StepResult {
    double loss = 0.0;
    double real_loss = 0.0;
    double syn_loss = 0.0;
};

// One optimization step of L = CE(real) + lambda * CE(synthetic), each
// sub-batch forwarded through its own BN branch.
StepResult combined_step(Network& net, SgdOpt& opt, const Batch& real_batch,
                         const Batch& syn_batch, const TrainConfig& config);

// Plain real-domain step; the lambda = 0 reference trajectory.
double real_only_step(Network& net, SgdOpt& opt, const Batch& real_batch,
                      const TrainConfig& config);

// Max relative error between analytic gradients of the combined loss
// and central finite differences. Running statistics are left untouched.
double grad_check(Network& net, const Batch& real_batch, const Batch& syn_batch, double lambda,
                  double epsilon = 1e-6);

struct LabeledData {
    Mat x;
    std::vector<int> labels;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double eval_acc = 0.0;
};

std::vector<EpochStats> train(Network& net, const LabeledData& real, const LabeledData& synthetic,
                              const std::optional<LabeledData>& eval_set,
                              const TrainConfig& config);

// Eval-phase activations just before the output affine.
Mat extract_features(Network& net, const Mat& inputs, Domain bn_domain);

double evaluate_accuracy(Network& net, const LabeledData& data, Domain bn_domain);

struct ProbeConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    int epochs = 200;
    int batch_size = 32;
    uint64_t seed = 0;
};

struct ProbeResult {
    Network classifier; // single affine, no BN
    double accuracy = 0.0;
};

// Linear probe: one affine layer trained with the same SGD machinery.
ProbeResult linear_probe(const Mat& features, const std::vector<int>& labels,
                         const ProbeConfig& config);

// JSON checkpoint with dims, all parameters, both BN branches, and the
// training configuration that produced the network.
void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const TrainConfig& config = {});
Network load_checkpoint(const std::filesystem::path& path);
TrainConfig checkpoint_config(const std::filesystem::path& path);

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

} // namespace divgen::trainer
