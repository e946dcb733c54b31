#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plansieve/featurize.hpp"
#include "plansieve/l1error.hpp"

namespace plansieve {

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int embed_dim = 64;
    int max_len = 23;
    int vocab_size = 0;   // embedding rows; use Vocabulary::id_bound()
    int mlp_hidden = 64;
    double dropout_rate = 0.0;
    std::uint64_t seed = 0;

    int head_dim() const { return embed_dim / heads; }
    int ffn_dim() const { return 4 * embed_dim; }
    void validate() const;  // throws ConfigError

    std::string to_json_text() const;
    static ModelConfig from_json_text(const std::string& text);
};

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
struct LayerParamsT {
    Mat<S> ln1_g, ln1_b;      // D x 1
    Mat<S> qkv_w;             // D x 3D
    Mat<S> qkv_b;             // 3D x 1
    Mat<S> proj_w;            // D x D
    Mat<S> proj_b;            // D x 1
    Mat<S> ln2_g, ln2_b;      // D x 1
    Mat<S> fc1_w;             // D x 4D
    Mat<S> fc1_b;             // 4D x 1
    Mat<S> fc2_w;             // 4D x D
    Mat<S> fc2_b;             // D x 1
};

/// Decoder-style transformer with pre-layer-norm blocks, learned positional
/// embeddings and a two-logit MLP head over [last hidden state, L1 feature].
template <class S>
struct ParamsT {
    ModelConfig config;
    Mat<S> tok_emb;           // vocab_size x D
    Mat<S> pos_emb;           // max_len x D
    std::vector<LayerParamsT<S>> layers;
    Mat<S> lnf_g, lnf_b;      // D x 1
    Mat<S> head_w1;           // (D+1) x M
    Mat<S> head_b1;           // M x 1
    Mat<S> head_w2;           // M x 2
    Mat<S> head_b2;           // 2 x 1
};

using ModelParams = ParamsT<float>;
using ModelParams64 = ParamsT<double>;

/// Visits every parameter tensor in the fixed serialization order.
template <class S, class F>
void visit_params(ParamsT<S>& p, F&& f) {
    f("tok_emb", p.tok_emb);
    f("pos_emb", p.pos_emb);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& L = p.layers[i];
        std::string pre = "layer" + std::to_string(i) + ".";
        f(pre + "ln1_g", L.ln1_g);
        f(pre + "ln1_b", L.ln1_b);
        f(pre + "qkv_w", L.qkv_w);
        f(pre + "qkv_b", L.qkv_b);
        f(pre + "proj_w", L.proj_w);
        f(pre + "proj_b", L.proj_b);
        f(pre + "ln2_g", L.ln2_g);
        f(pre + "ln2_b", L.ln2_b);
        f(pre + "fc1_w", L.fc1_w);
        f(pre + "fc1_b", L.fc1_b);
        f(pre + "fc2_w", L.fc2_w);
        f(pre + "fc2_b", L.fc2_b);
    }
    f("lnf_g", p.lnf_g);
    f("lnf_b", p.lnf_b);
    f("head_w1", p.head_w1);
    f("head_b1", p.head_b1);
    f("head_w2", p.head_w2);
    f("head_b2", p.head_b2);
}

template <class S, class F>
void visit_params(const ParamsT<S>& p, F&& f) {
    visit_params(const_cast<ParamsT<S>&>(p), [&](const std::string& n, Mat<S>& m) {
        f(n, static_cast<const Mat<S>&>(m));
    });
}

ModelParams init_model(const ModelConfig& config);
ModelParams64 init_model64(const ModelConfig& config);

/// One training/evaluation record: the encoded sequence plus the raw L1
/// aggregate and the largest aggregate attainable for that query (the
/// normalization denominator fed to the head).
struct LabeledExample {
    TokenSequence sequence;
    double l1_aggregate = 0.0;
    double l1_max = 0.0;  // 0 when the query has nothing to displace
    int label = 0;        // 0 = optimal, 1 = sub-optimal
    std::string query_id;
    int replica_id = 0;

    double l1_feature() const { return l1_max > 0.0 ? l1_aggregate / l1_max : 0.0; }
};

struct ForwardResult {
    double p_optimal = 0.0;
    double p_suboptimal = 0.0;
};

template <class S>
ForwardResult forward(const ParamsT<S>& params, const LabeledExample& example);

/// Mean cross-entropy over the batch plus analytic gradients for every
/// parameter tensor. `dropout_rng` enables dropout (training mode).
template <class S>
double loss_and_gradients(const ParamsT<S>& params,
                          const std::vector<LabeledExample>& batch,
                          ParamsT<S>& grads, Rng* dropout_rng = nullptr);

template <class S>
ParamsT<S> zero_like(const ParamsT<S>& params);

struct TrainConfig {
    int epochs = 40;
    int batch_size = 32;
    double peak_lr = 3e-3;
    double weight_decay = 0.01;
    double warmup_fraction = 0.3;   // one-cycle: linear ramp up, cosine down
    double start_div = 25.0;        // initial lr = peak / start_div
    double final_div = 1e4;         // final lr = peak / final_div
    double train_fraction = 0.7;    // used by the query-level splitter
    int augment_replicas = 0;
    double decision_threshold = 0.5;
    std::uint64_t seed = 0;

    std::string to_json_text() const;
    static TrainConfig from_json_text(const std::string& text);
};

double one_cycle_lr(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double eval_accuracy = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    ModelParams params;       // best held-out accuracy checkpoint
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_accuracy = 0.0;
    bool single_class_warning = false;
};

TrainResult train(const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& eval_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg);

/// Query-level 70/30 split (replicas of one query never straddle it),
/// then training as above.
TrainResult train(const std::vector<LabeledExample>& dataset,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg);

/// Pre-encoding form of one query used by augmentation and prediction.
struct QueryExample {
    std::string query_id;
    int replica_id = 0;
    std::vector<PositionVectorPair> pairs;  // ascending k
    int label = 0;
};

/// Permutation augmentation: per join size the first ceil(N_k/2) rho ranks
/// stay fixed, the tail ranks are reshuffled; rho_hat and the label never
/// change. Element 0 of the result is the original.
std::vector<QueryExample> augment_permute(const QueryExample& example, int replicas,
                                          std::uint64_t seed);

LabeledExample encode_example(const QueryExample& example, const Vocabulary& vocab,
                              int max_len, const L1Weights& weights = {});

struct PredictOutcome {
    PlanLabel label = PlanLabel::Optimal;
    double p_suboptimal = 0.0;
    L1Report l1;
};

/// Builds the L1 report from the supplied position vectors, encodes, and
/// runs the classifier. Deterministic (inference mode).
PredictOutcome predict(const ModelParams& params,
                       const std::vector<PositionVectorPair>& pairs,
                       const Vocabulary& vocab, const L1Weights& weights = {},
                       double threshold = 0.5);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

/// Positive class = optimal, negative = sub-optimal.
struct ConfusionMatrix {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    double accuracy() const;
    double suboptimal_accuracy() const;  // tn / (tn + fp)
    void add(PlanLabel predicted, PlanLabel actual);
};

ConfusionMatrix confusion(const std::vector<PlanLabel>& predictions,
                          const std::vector<PlanLabel>& labels);

/// Axis-aligned threshold tree over the scalar L1 aggregate.
class DecisionTree {
public:
    struct Node {
        double threshold = 0.0;
        int left = -1;   // value < threshold
        int right = -1;  // value >= threshold
        int label = 0;   // leaves only
    };

    int predict(double value) const;
    int depth() const;

    std::string to_json_text() const;
    static DecisionTree from_json_text(const std::string& text);

    static DecisionTree fit(const std::vector<double>& values,
                            const std::vector<int>& labels, int max_depth);

private:
    friend DecisionTree train_baseline_dt(const std::vector<double>&,
                                          const std::vector<int>&,
                                          const std::vector<int>&, int, std::uint64_t);
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Depth selected by k-fold cross-validated accuracy (ties prefer the
/// smaller depth); the final tree is refit on all data.
DecisionTree train_baseline_dt(const std::vector<double>& l1_values,
                               const std::vector<int>& labels,
                               const std::vector<int>& max_depth_grid, int folds,
                               std::uint64_t seed);

}  // namespace plansieve
