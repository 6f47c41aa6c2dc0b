#include "cardiopulm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/eval.hpp"
#include "cardiopulm/kernels.hpp"
#include "cardiopulm/rng.hpp"

namespace cardiopulm {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(std::span<const double> x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

// Forward pass keeping hidden pre-activations for backprop.
struct ForwardState {
    std::vector<double> hidden;      // post-ReLU
    std::vector<double> hidden_pre;  // pre-ReLU
    double logit = 0;
};

ForwardState run_forward(const ModelParams& p, std::span<const double> x) {
    ForwardState s;
    if (static_cast<int>(x.size()) != p.input_dim())
        throw ValidationError("fusion input dimension " + std::to_string(x.size()) +
                              " does not match model D_in " + std::to_string(p.input_dim()));
    check_finite(x, "fusion input");
    if (p.has_hidden()) {
        const int h = p.layer_sizes[1];
        const int d = p.layer_sizes[0];
        s.hidden_pre.resize(static_cast<std::size_t>(h));
        s.hidden.resize(static_cast<std::size_t>(h));
        for (int o = 0; o < h; ++o) {
            double acc = p.biases[0][static_cast<std::size_t>(o)];
            const double* w = &p.weights[0][static_cast<std::size_t>(o) * d];
            for (int i = 0; i < d; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
            s.hidden_pre[static_cast<std::size_t>(o)] = acc;
            s.hidden[static_cast<std::size_t>(o)] = acc > 0.0 ? acc : 0.0;
        }
        double logit = p.biases[1][0];
        for (int i = 0; i < h; ++i)
            logit += p.weights[1][static_cast<std::size_t>(i)] * s.hidden[static_cast<std::size_t>(i)];
        s.logit = logit;
    } else {
        const int d = p.layer_sizes[0];
        double logit = p.biases[0][0];
        for (int i = 0; i < d; ++i)
            logit += p.weights[0][static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        s.logit = logit;
    }
    return s;
}

Gradients zero_like(const ModelParams& p) {
    Gradients g;
    g.weights.resize(p.weights.size());
    g.biases.resize(p.biases.size());
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        g.weights[l].assign(p.weights[l].size(), 0.0);
        g.biases[l].assign(p.biases[l].size(), 0.0);
    }
    return g;
}

// Per-example gradient of BCE w.r.t. parameters, scaled by `scale`.
void accumulate_example(const ModelParams& p, const FusionInput& ex, double scale,
                        double pos_weight, Gradients& g) {
    const ForwardState s = run_forward(p, ex.x);
    const double y_hat = sigmoid(s.logit);
    // d/dlogit of -[w y log p + (1-y) log(1-p)]
    const double dlogit = (ex.label == 1 ? pos_weight * (y_hat - 1.0) : y_hat) * scale;

    if (p.has_hidden()) {
        const int d = p.layer_sizes[0];
        const int h = p.layer_sizes[1];
        g.biases[1][0] += dlogit;
        for (int i = 0; i < h; ++i)
            g.weights[1][static_cast<std::size_t>(i)] += dlogit * s.hidden[static_cast<std::size_t>(i)];
        for (int o = 0; o < h; ++o) {
            if (s.hidden_pre[static_cast<std::size_t>(o)] <= 0.0) continue;
            const double dh = dlogit * p.weights[1][static_cast<std::size_t>(o)];
            g.biases[0][static_cast<std::size_t>(o)] += dh;
            double* gw = &g.weights[0][static_cast<std::size_t>(o) * d];
            for (int i = 0; i < d; ++i) gw[i] += dh * ex.x[static_cast<std::size_t>(i)];
        }
    } else {
        const int d = p.layer_sizes[0];
        g.biases[0][0] += dlogit;
        for (int i = 0; i < d; ++i)
            g.weights[0][static_cast<std::size_t>(i)] += dlogit * ex.x[static_cast<std::size_t>(i)];
    }
}

struct AdamState {
    Gradients m;
    Gradients v;
    long step = 0;
};

void adam_step(ModelParams& p, const Gradients& g, AdamState& st, double lr,
               double weight_decay) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    st.step += 1;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    const auto update = [&](std::vector<double>& theta, const std::vector<double>& grad,
                            std::vector<double>& m, std::vector<double>& v) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            theta[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * theta[i]);
        }
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        update(p.weights[l], g.weights[l], st.m.weights[l], st.v.weights[l]);
        update(p.biases[l], g.biases[l], st.m.biases[l], st.v.biases[l]);
    }
}

}  // namespace

ModelParams init_params(const BlockLayout& layout, int hidden_width, std::uint64_t seed,
                        const std::string& kb_version) {
    const int d = layout.total();
    if (d < 1) throw ValidationError("fusion input layout is empty");
    ModelParams p;
    p.layout = layout;
    p.kb_version = kb_version;
    p.rng_seed = seed;
    if (hidden_width > 0)
        p.layer_sizes = {d, hidden_width, 1};
    else
        p.layer_sizes = {d, 1};

    // Uniform +-sqrt(6 / (fan_in + fan_out)), counter-seeded.
    std::uint64_t counter = 0;
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const int fan_in = p.layer_sizes[l];
        const int fan_out = p.layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (double& wi : w)
            wi = bound * (2.0 * rng::uniform01(rng::combine(seed, 0xA11, counter++)) - 1.0);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::vector<double>(static_cast<std::size_t>(fan_out), 0.0));
    }
    return p;
}

double forward(const ModelParams& p, std::span<const double> x) {
    return sigmoid(run_forward(p, x).logit);
}

double forward(const ModelParams& p, const FusionInput& x) { return forward(p, x.x); }

double logit_with_input_gradient(const ModelParams& p, std::span<const double> x,
                                 std::vector<double>& dlogit_dx) {
    const ForwardState s = run_forward(p, x);
    const int d = p.layer_sizes[0];
    dlogit_dx.assign(static_cast<std::size_t>(d), 0.0);
    if (p.has_hidden()) {
        const int h = p.layer_sizes[1];
        for (int o = 0; o < h; ++o) {
            if (s.hidden_pre[static_cast<std::size_t>(o)] <= 0.0) continue;
            const double dh = p.weights[1][static_cast<std::size_t>(o)];
            const double* w = &p.weights[0][static_cast<std::size_t>(o) * d];
            for (int i = 0; i < d; ++i) dlogit_dx[static_cast<std::size_t>(i)] += dh * w[i];
        }
    } else {
        for (int i = 0; i < d; ++i) dlogit_dx[static_cast<std::size_t>(i)] = p.weights[0][static_cast<std::size_t>(i)];
    }
    return s.logit;
}

double bce_loss(double y_hat, int y) {
    if (y != 0 && y != 1) throw ValidationError("BCE label must be 0 or 1");
    const double p = std::clamp(y_hat, kBceEpsilon, 1.0 - kBceEpsilon);
    return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double bce_loss_weighted(double y_hat, int y, double pos_weight) {
    const double base = bce_loss(y_hat, y);
    return y == 1 ? pos_weight * base : base;
}

double Gradients::global_norm() const {
    double sq = 0.0;
    for (const auto& w : weights)
        for (double v : w) sq += v * v;
    for (const auto& b : biases)
        for (double v : b) sq += v * v;
    return std::sqrt(sq);
}

Gradients gradient(const ModelParams& p, std::span<const FusionInput> batch) {
    return gradient(p, batch, 1.0);
}

Gradients gradient(const ModelParams& p, std::span<const FusionInput> batch,
                   double pos_weight) {
    if (batch.empty()) throw ValidationError("gradient needs a nonempty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());

    // Per-example gradients computed independently (parallel), then folded
    // with a fixed pairwise tree so thread count never changes the result.
    const std::int64_t n = static_cast<std::int64_t>(batch.size());
    std::vector<Gradients> per(batch.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t e = 0; e < n; ++e) {
        per[static_cast<std::size_t>(e)] = zero_like(p);
        accumulate_example(p, batch[static_cast<std::size_t>(e)], scale, pos_weight,
                           per[static_cast<std::size_t>(e)]);
    }

    Gradients out = zero_like(p);
    std::vector<double> terms(batch.size());
    for (std::size_t l = 0; l < out.weights.size(); ++l) {
        for (std::size_t i = 0; i < out.weights[l].size(); ++i) {
            for (std::size_t e = 0; e < per.size(); ++e) terms[e] = per[e].weights[l][i];
            out.weights[l][i] = kernels::pairwise_sum(terms);
        }
        for (std::size_t i = 0; i < out.biases[l].size(); ++i) {
            for (std::size_t e = 0; e < per.size(); ++e) terms[e] = per[e].biases[l][i];
            out.biases[l][i] = kernels::pairwise_sum(terms);
        }
    }
    return out;
}

void clip_gradients(Gradients& g, double max_norm) {
    const double norm = g.global_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (auto& w : g.weights)
        for (double& v : w) v *= s;
    for (auto& b : g.biases)
        for (double& v : b) v *= s;
}

double cosine_lr(double base_lr, int epoch, int max_epochs) {
    if (epoch <= 0) return base_lr;
    if (epoch >= max_epochs) return 0.0;
    return base_lr * 0.5 *
           (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(epoch) /
                           static_cast<double>(max_epochs)));
}

void aggregate_by_subject(std::span<const FusionInput> inputs,
                          std::span<const double> scan_scores,
                          std::vector<std::string>& subjects, std::vector<double>& scores,
                          std::vector<int>& labels, SubjectAggregate rule) {
    subjects.clear();
    scores.clear();
    labels.clear();
    std::map<std::string, std::size_t> index;
    std::vector<double> counts;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto [it, inserted] = index.try_emplace(inputs[i].subject_id, subjects.size());
        if (inserted) {
            subjects.push_back(inputs[i].subject_id);
            scores.push_back(scan_scores[i]);
            labels.push_back(inputs[i].label);
            counts.push_back(1.0);
        } else if (rule == SubjectAggregate::max) {
            scores[it->second] = std::max(scores[it->second], scan_scores[i]);
        } else {
            // running mean
            counts[it->second] += 1.0;
            scores[it->second] += (scan_scores[i] - scores[it->second]) / counts[it->second];
        }
    }
}

TrainResult train(const std::vector<FusionInput>& train_set,
                  const std::vector<FusionInput>& val_set, const TrainConfig& config,
                  const BlockLayout& layout, const std::string& kb_version) {
    if (train_set.empty() || val_set.empty())
        throw ValidationError("train and validation sets must be nonempty");
    {
        bool pos = false, neg = false;
        for (const FusionInput& ex : val_set) (ex.label ? pos : neg) = true;
        if (!pos || !neg)
            throw ValidationError("validation set must contain both classes");
    }
    for (const FusionInput& ex : train_set)
        if (static_cast<int>(ex.x.size()) != layout.total())
            throw ValidationError("training example dimension mismatch");

    ModelParams p = init_params(layout, config.hidden_width, config.seed, kb_version);

    AdamState adam;
    adam.m = zero_like(p);
    adam.v = zero_like(p);

    TrainResult result;
    result.params = p;
    result.best_epoch = 0;
    result.best_val_auc = -1.0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    const auto val_auc_now = [&]() {
        std::vector<double> raw(val_set.size());
        for (std::size_t i = 0; i < val_set.size(); ++i) raw[i] = forward(p, val_set[i]);
        std::vector<std::string> subj;
        std::vector<double> s;
        std::vector<int> y;
        aggregate_by_subject(val_set, raw, subj, s, y);
        return auc(s, y);
    };

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const double lr = cosine_lr(config.lr, epoch - 1, config.max_epochs);

        // Seeded Fisher-Yates; the permutation is a pure function of
        // (seed, epoch).
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng::below(
                rng::combine(config.seed, 0x5F17, static_cast<std::uint64_t>(epoch), i), i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        std::vector<FusionInput> batch;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.assign(end - start, FusionInput{});
            for (std::size_t i = start; i < end; ++i) batch[i - start] = train_set[order[i]];

            Gradients g = gradient(p, batch, config.pos_weight);
            clip_gradients(g, 1.0);
            adam_step(p, g, adam, lr, config.weight_decay);

            for (const FusionInput& ex : batch) {
                epoch_loss += bce_loss_weighted(forward(p, ex), ex.label, config.pos_weight);
                ++seen;
            }
        }
        epoch_loss /= static_cast<double>(seen);
        if (!std::isfinite(epoch_loss))
            throw NumericError("training loss became non-finite at epoch " +
                               std::to_string(epoch));

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = epoch_loss;
        log.val_auc = val_auc_now();
        log.improved = log.val_auc > result.best_val_auc;
        if (log.improved) {
            result.best_val_auc = log.val_auc;
            result.best_epoch = epoch;
            result.params = p;
        }
        result.log.push_back(log);

        if (epoch - result.best_epoch >= config.patience) break;
    }
    return result;
}

std::vector<double> predict_batch(const ModelParams& p, std::span<const FusionInput> inputs) {
    std::vector<double> out(inputs.size());
    const std::int64_t n = static_cast<std::int64_t>(inputs.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = forward(p, inputs[static_cast<std::size_t>(i)]);
    return out;
}

void save_params(const ModelParams& p, const std::string& path) {
    json j;
    j["version"] = p.version;
    j["kb_version"] = p.kb_version;
    j["layer_sizes"] = p.layer_sizes;
    j["weights"] = p.weights;
    j["biases"] = p.biases;
    j["layout"] = {{"d_card", p.layout.d_card},
                   {"d_reason", p.layout.d_reason},
                   {"d_lung", p.layout.d_lung},
                   {"d_findings", p.layout.d_findings}};
    j["channel_manifest"] = p.channel_manifest;
    j["rng_seed"] = p.rng_seed;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write params file '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("I/O failure writing '" + path + "'");
}

ModelParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open params file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("bad params JSON '" + path + "': " + e.what());
    }
    ModelParams p;
    try {
        p.version = j.at("version").get<std::string>();
        p.kb_version = j.at("kb_version").get<std::string>();
        p.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        p.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        p.biases = j.at("biases").get<std::vector<std::vector<double>>>();
        p.layout.d_card = j.at("layout").at("d_card").get<int>();
        p.layout.d_reason = j.at("layout").at("d_reason").get<int>();
        p.layout.d_lung = j.at("layout").at("d_lung").get<int>();
        p.layout.d_findings = j.at("layout").at("d_findings").get<int>();
        p.channel_manifest = j.at("channel_manifest").get<std::vector<std::string>>();
        p.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError("params schema violation in '" + path + "': " + e.what());
    }
    if (p.layer_sizes.size() != 2 && p.layer_sizes.size() != 3)
        throw ValidationError("params must have 1 or 2 layers");
    if (p.layer_sizes.front() != p.layout.total())
        throw ValidationError("params layer size disagrees with block layout");
    for (const auto& w : p.weights)
        check_finite(w, "loaded weights");
    return p;
}

ModelParams load_params(const std::string& path, const std::string& expected_kb_version,
                        const BlockLayout& expected_layout) {
    ModelParams p = load_params(path);
    if (p.layout.d_reason > 0 && p.kb_version != expected_kb_version)
        throw ValidationError("params KB version '" + p.kb_version +
                              "' does not match current KB '" + expected_kb_version + "'");
    if (!(p.layout == expected_layout))
        throw ValidationError("params block layout does not match expectation (d_reason " +
                              std::to_string(p.layout.d_reason) + " vs " +
                              std::to_string(expected_layout.d_reason) + ")");
    return p;
}

}  // namespace cardiopulm
