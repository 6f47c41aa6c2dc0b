#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cardiopulm {

// Ordered blocks of the fused input [z_card; z_reason; z_lung; z_findings].
// Any block may be absent (0); the findings block exists only for the
// raw-findings ablation variant.
struct BlockLayout {
    int d_card = 0;
    int d_reason = 0;
    int d_lung = 0;
    int d_findings = 0;
    int total() const { return d_card + d_reason + d_lung + d_findings; }
    bool operator==(const BlockLayout&) const = default;
};

struct FusionInput {
    std::vector<double> x;
    std::string subject_id;
    std::string scan_id;
    int label = 0;  // {0,1}
};

// One hidden rectifier layer (or none, for the linear test configuration)
// followed by a single logit.
struct ModelParams {
    std::vector<int> layer_sizes;             // {D, hidden, 1} or {D, 1}
    std::vector<std::vector<double>> weights; // row-major [out][in] per layer
    std::vector<std::vector<double>> biases;
    BlockLayout layout;
    std::string kb_version;
    std::vector<std::string> channel_manifest;
    std::string version = "fusion-v1";
    std::uint64_t rng_seed = 0;

    int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
    bool has_hidden() const { return layer_sizes.size() == 3; }
};

ModelParams init_params(const BlockLayout& layout, int hidden_width, std::uint64_t seed,
                        const std::string& kb_version);

inline constexpr double kBceEpsilon = 1e-7;

double forward(const ModelParams& p, std::span<const double> x);
double forward(const ModelParams& p, const FusionInput& x);
// Pre-sigmoid logit plus d(logit)/dx, used by the attribution module.
double logit_with_input_gradient(const ModelParams& p, std::span<const double> x,
                                 std::vector<double>& dlogit_dx);

double bce_loss(double y_hat, int y);
// Weighted variant used when TrainConfig::pos_weight != 1; w = 1 reduces to
// the plain loss.
double bce_loss_weighted(double y_hat, int y, double pos_weight);

struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    double global_norm() const;
};

// Mean-BCE gradients over the batch, exact analytic backprop. Per-example
// terms fold with a pairwise tree, so values do not depend on summation order.
Gradients gradient(const ModelParams& p, std::span<const FusionInput> batch);
Gradients gradient(const ModelParams& p, std::span<const FusionInput> batch,
                   double pos_weight);

// Scale gradients so the global norm is at most max_norm.
void clip_gradients(Gradients& g, double max_norm);

double cosine_lr(double base_lr, int epoch, int max_epochs);

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int max_epochs = 100;
    int patience = 10;
    int batch_size = 64;
    int hidden_width = 64;
    double pos_weight = 1.0;  // optional positive-class weight; 1 = plain BCE
    std::uint64_t seed = 1;
};

struct EpochLog {
    int epoch = 0;  // 1-based
    double lr = 0;
    double train_loss = 0;
    double val_auc = 0;
    bool improved = false;
};

struct TrainResult {
    ModelParams params;   // best-validation-AUC snapshot
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_auc = 0;
};

// Adam (b1 0.9, b2 0.999, eps 1e-8) with decoupled weight decay, cosine
// annealing to zero over max_epochs, global-norm clipping at 1.0, early
// stopping on subject-level validation AUC with the configured patience.
// Bit-deterministic for a fixed seed and data.
TrainResult train(const std::vector<FusionInput>& train_set,
                  const std::vector<FusionInput>& val_set, const TrainConfig& config,
                  const BlockLayout& layout, const std::string& kb_version);

std::vector<double> predict_batch(const ModelParams& p,
                                  std::span<const FusionInput> inputs);

void save_params(const ModelParams& p, const std::string& path);
// expected_* guard against loading a model trained for a different KB.
ModelParams load_params(const std::string& path, const std::string& expected_kb_version,
                        const BlockLayout& expected_layout);
ModelParams load_params(const std::string& path);

// Subject-level score aggregation, shared by training early stopping and the
// evaluation harness. Default rule is the max over a subject's scans; mean is
// the configurable alternative.
enum class SubjectAggregate { max, mean };

void aggregate_by_subject(std::span<const FusionInput> inputs,
                          std::span<const double> scan_scores,
                          std::vector<std::string>& subjects, std::vector<double>& scores,
                          std::vector<int>& labels,
                          SubjectAggregate rule = SubjectAggregate::max);

}  // namespace cardiopulm
