#include "plansieve/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

namespace plansieve {

using nlohmann::json;

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("model needs at least one layer");
    if (heads < 1) throw ConfigError("model needs at least one attention head");
    if (embed_dim % heads != 0)
        throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                          " is not divisible by heads " + std::to_string(heads));
    if (max_len < 3) throw ConfigError("max_len must be at least 3");
    if (vocab_size < 5) throw ConfigError("vocab_size must cover the specials and one subset");
    if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must lie in [0, 1)");
}

std::string ModelConfig::to_json_text() const {
    json j{{"layers", layers},       {"heads", heads},
           {"embed_dim", embed_dim}, {"max_len", max_len},
           {"vocab_size", vocab_size}, {"mlp_hidden", mlp_hidden},
           {"dropout_rate", dropout_rate}, {"seed", seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.max_len = j.value("max_len", c.max_len);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.seed = j.value("seed", c.seed);
    return c;
}

std::string TrainConfig::to_json_text() const {
    json j{{"epochs", epochs},
           {"batch_size", batch_size},
           {"peak_lr", peak_lr},
           {"weight_decay", weight_decay},
           {"warmup_fraction", warmup_fraction},
           {"start_div", start_div},
           {"final_div", final_div},
           {"train_fraction", train_fraction},
           {"augment_replicas", augment_replicas},
           {"decision_threshold", decision_threshold},
           {"seed", seed}};
    return j.dump();
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.start_div = j.value("start_div", c.start_div);
    c.final_div = j.value("final_div", c.final_div);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.augment_replicas = j.value("augment_replicas", c.augment_replicas);
    c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

constexpr double kInitScale = 0.02;
constexpr double kLnEps = 1e-5;

template <class S>
Mat<S> randn(Rng& rng, int rows, int cols, double scale) {
    Mat<S> m(rows, cols);
    // fill row by row so float and double models share the stream
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = static_cast<S>(scale * rng.normal());
    return m;
}

template <class S>
ParamsT<S> init_impl(const ModelConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, "model-init"));
    const int D = config.embed_dim;
    const int F = config.ffn_dim();
    const int M = config.mlp_hidden;

    ParamsT<S> p;
    p.config = config;
    p.tok_emb = randn<S>(rng, config.vocab_size, D, kInitScale);
    p.pos_emb = randn<S>(rng, config.max_len, D, kInitScale);
    p.layers.resize(config.layers);
    for (auto& L : p.layers) {
        L.ln1_g = Mat<S>::Ones(D, 1);
        L.ln1_b = Mat<S>::Zero(D, 1);
        L.qkv_w = randn<S>(rng, D, 3 * D, kInitScale);
        L.qkv_b = Mat<S>::Zero(3 * D, 1);
        L.proj_w = randn<S>(rng, D, D, kInitScale);
        L.proj_b = Mat<S>::Zero(D, 1);
        L.ln2_g = Mat<S>::Ones(D, 1);
        L.ln2_b = Mat<S>::Zero(D, 1);
        L.fc1_w = randn<S>(rng, D, F, kInitScale);
        L.fc1_b = Mat<S>::Zero(F, 1);
        L.fc2_w = randn<S>(rng, F, D, kInitScale);
        L.fc2_b = Mat<S>::Zero(D, 1);
    }
    p.lnf_g = Mat<S>::Ones(D, 1);
    p.lnf_b = Mat<S>::Zero(D, 1);
    p.head_w1 = randn<S>(rng, D + 1, M, kInitScale);
    p.head_b1 = Mat<S>::Zero(M, 1);
    p.head_w2 = randn<S>(rng, M, 2, kInitScale);
    p.head_b2 = Mat<S>::Zero(2, 1);
    return p;
}

template <class S>
struct LnCache {
    Mat<S> xhat;          // n x D
    Mat<S> rstd;          // n x 1
};

/// y = xhat * diag(g) + b per row
template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, LnCache<S>& cache) {
    const int n = static_cast<int>(x.rows());
    const int D = static_cast<int>(x.cols());
    cache.xhat.resize(n, D);
    cache.rstd.resize(n, 1);
    Mat<S> y(n, D);
    for (int i = 0; i < n; ++i) {
        S mu = x.row(i).mean();
        S var = (x.row(i).array() - mu).square().mean();
        S rstd = S(1) / std::sqrt(var + S(kLnEps));
        cache.rstd(i, 0) = rstd;
        cache.xhat.row(i) = ((x.row(i).array() - mu) * rstd).matrix();
        y.row(i) = (cache.xhat.row(i).array() * g.col(0).transpose().array() +
                    b.col(0).transpose().array())
                       .matrix();
    }
    return y;
}

template <class S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& g, const LnCache<S>& cache,
                           Mat<S>& dg, Mat<S>& db) {
    const int n = static_cast<int>(dy.rows());
    const int D = static_cast<int>(dy.cols());
    Mat<S> dx(n, D);
    for (int i = 0; i < n; ++i) {
        auto dyr = dy.row(i).array();
        auto xhat = cache.xhat.row(i).array();
        dg.col(0).array() += (dyr * xhat).transpose();
        db.col(0).array() += dyr.transpose();
        auto dxhat = (dyr * g.col(0).transpose().array()).eval();
        S mean_dxhat = dxhat.mean();
        S mean_dxhat_xhat = (dxhat * xhat).mean();
        dx.row(i) =
            (cache.rstd(i, 0) * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)).matrix();
    }
    return dx;
}

template <class S>
S gelu(S u) {
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    const S a = S(0.044715);
    return S(0.5) * u * (S(1) + std::tanh(c * (u + a * u * u * u)));
}

template <class S>
S gelu_grad(S u) {
    const S c = S(0.7978845608028654);
    const S a = S(0.044715);
    S t = std::tanh(c * (u + a * u * u * u));
    return S(0.5) * (S(1) + t) + S(0.5) * u * (S(1) - t * t) * c * (S(1) + S(3) * a * u * u);
}

template <class S>
struct LayerCache {
    Mat<S> x_in;        // n x D, block input
    LnCache<S> ln1;
    Mat<S> h1;          // n x D
    Mat<S> qkv;         // n x 3D
    std::vector<Mat<S>> attn_probs;  // per head, n x n
    Mat<S> attn_out;    // n x D (heads concatenated)
    Mat<S> x_mid;       // n x D, after attention residual
    LnCache<S> ln2;
    Mat<S> h2;          // n x D
    Mat<S> ffn_pre;     // n x 4D (before gelu)
    Mat<S> ffn_act;     // n x 4D
    Mat<S> drop_attn;   // dropout masks (empty when inactive)
    Mat<S> drop_ffn;
};

template <class S>
struct ForwardCache {
    int n = 0;
    std::vector<int> tokens;
    Mat<S> x0;          // n x D after embeddings (and dropout)
    Mat<S> drop_emb;
    std::vector<LayerCache<S>> layers;
    LnCache<S> lnf;
    Mat<S> xf;          // n x D, final layer output before lnf
    Mat<S> hf;          // n x D
    Eigen::Matrix<S, Eigen::Dynamic, 1> z;   // D+1 classifier input
    Eigen::Matrix<S, Eigen::Dynamic, 1> a1;  // M pre-activation
    Eigen::Matrix<S, Eigen::Dynamic, 1> r1;  // M relu output
    Eigen::Matrix<S, Eigen::Dynamic, 1> probs;  // 2
};

template <class S>
Mat<S> dropout_mask(Rng* rng, double rate, int rows, int cols) {
    if (!rng || rate <= 0.0) return Mat<S>();
    Mat<S> m(rows, cols);
    S keep = S(1.0 / (1.0 - rate));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng->real() < rate ? S(0) : keep;
    return m;
}

template <class S>
void run_forward(const ParamsT<S>& params, const LabeledExample& example,
                 ForwardCache<S>& cache, Rng* dropout_rng) {
    const ModelConfig& cfg = params.config;
    const TokenSequence& seq = example.sequence;
    if (static_cast<int>(seq.tokens.size()) != cfg.max_len)
        throw DataError("sequence length " + std::to_string(seq.tokens.size()) +
                        " does not match max_len " + std::to_string(cfg.max_len));
    if (seq.true_length < 1 || seq.true_length > cfg.max_len)
        throw DataError("true_length out of range");
    for (int i = 0; i < seq.true_length; ++i)
        if (seq.tokens[i] < 0 || seq.tokens[i] >= cfg.vocab_size)
            throw DataError("token id " + std::to_string(seq.tokens[i]) +
                            " outside the vocabulary");

    const int n = seq.true_length;  // pad rows never influence the readout
    const int D = cfg.embed_dim;
    const int H = cfg.heads;
    const int dh = cfg.head_dim();
    const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));

    cache.n = n;
    cache.tokens.assign(seq.tokens.begin(), seq.tokens.begin() + n);
    cache.x0.resize(n, D);
    for (int i = 0; i < n; ++i)
        cache.x0.row(i) = params.tok_emb.row(seq.tokens[i]) + params.pos_emb.row(i);
    cache.drop_emb = dropout_mask<S>(dropout_rng, cfg.dropout_rate, n, D);
    if (cache.drop_emb.size()) cache.x0.array() *= cache.drop_emb.array();

    Mat<S> x = cache.x0;
    cache.layers.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
        LayerCache<S>& lc = cache.layers[l];
        const LayerParamsT<S>& lp = params.layers[l];
        lc.x_in = x;
        lc.h1 = layer_norm(x, lp.ln1_g, lp.ln1_b, lc.ln1);
        lc.qkv = (lc.h1 * lp.qkv_w).rowwise() + lp.qkv_b.col(0).transpose();

        lc.attn_probs.resize(H);
        lc.attn_out.resize(n, D);
        for (int h = 0; h < H; ++h) {
            auto Q = lc.qkv.middleCols(h * dh, dh);
            auto K = lc.qkv.middleCols(D + h * dh, dh);
            auto V = lc.qkv.middleCols(2 * D + h * dh, dh);
            Mat<S> scores = (Q * K.transpose()) * inv_sqrt_dh;
            Mat<S>& probs = lc.attn_probs[h];
            probs.setZero(n, n);
            for (int i = 0; i < n; ++i) {
                // causal: position i attends to 0..i only
                S mx = scores.row(i).head(i + 1).maxCoeff();
                S sum = S(0);
                for (int j = 0; j <= i; ++j) {
                    S e = std::exp(scores(i, j) - mx);
                    probs(i, j) = e;
                    sum += e;
                }
                probs.row(i).head(i + 1) /= sum;
            }
            lc.attn_out.middleCols(h * dh, dh) = probs * V;
        }
        Mat<S> o = (lc.attn_out * lp.proj_w).rowwise() + lp.proj_b.col(0).transpose();
        lc.drop_attn = dropout_mask<S>(dropout_rng, cfg.dropout_rate, n, D);
        if (lc.drop_attn.size()) o.array() *= lc.drop_attn.array();
        lc.x_mid = x + o;

        lc.h2 = layer_norm(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2);
        lc.ffn_pre = (lc.h2 * lp.fc1_w).rowwise() + lp.fc1_b.col(0).transpose();
        lc.ffn_act = lc.ffn_pre.unaryExpr([](S u) { return gelu(u); });
        Mat<S> f = (lc.ffn_act * lp.fc2_w).rowwise() + lp.fc2_b.col(0).transpose();
        lc.drop_ffn = dropout_mask<S>(dropout_rng, cfg.dropout_rate, n, D);
        if (lc.drop_ffn.size()) f.array() *= lc.drop_ffn.array();
        x = lc.x_mid + f;
    }
    cache.xf = x;
    cache.hf = layer_norm(x, params.lnf_g, params.lnf_b, cache.lnf);

    cache.z.resize(D + 1);
    cache.z.head(D) = cache.hf.row(n - 1).transpose();
    cache.z(D) = S(example.l1_feature());
    cache.a1 = params.head_w1.transpose() * cache.z + params.head_b1.col(0);
    cache.r1 = cache.a1.unaryExpr([](S u) { return gelu(u); });
    Eigen::Matrix<S, Eigen::Dynamic, 1> logits =
        params.head_w2.transpose() * cache.r1 + params.head_b2.col(0);
    S mx = logits.maxCoeff();
    Eigen::Matrix<S, Eigen::Dynamic, 1> ex = (logits.array() - mx).exp();
    cache.probs = ex / ex.sum();
}

template <class S>
void run_backward(const ParamsT<S>& params, const ForwardCache<S>& cache,
                  const Eigen::Matrix<S, Eigen::Dynamic, 1>& dlogits, ParamsT<S>& g) {
    const ModelConfig& cfg = params.config;
    const int n = cache.n;
    const int D = cfg.embed_dim;
    const int H = cfg.heads;
    const int dh = cfg.head_dim();
    const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));

    // classifier head
    g.head_w2 += cache.r1 * dlogits.transpose();
    g.head_b2.col(0) += dlogits;
    Eigen::Matrix<S, Eigen::Dynamic, 1> dr1 = params.head_w2 * dlogits;
    Eigen::Matrix<S, Eigen::Dynamic, 1> da1 =
        dr1.array() * cache.a1.unaryExpr([](S u) { return gelu_grad(u); }).array();
    g.head_w1 += cache.z * da1.transpose();
    g.head_b1.col(0) += da1;
    Eigen::Matrix<S, Eigen::Dynamic, 1> dz = params.head_w1 * da1;

    Mat<S> dhf = Mat<S>::Zero(n, D);
    dhf.row(n - 1) = dz.head(D).transpose();
    Mat<S> dx = layer_norm_backward(dhf, params.lnf_g, cache.lnf, g.lnf_g, g.lnf_b);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerCache<S>& lc = cache.layers[l];
        const LayerParamsT<S>& lp = params.layers[l];
        LayerParamsT<S>& lg = g.layers[l];

        // FFN sublayer: x = x_mid + drop(f)
        Mat<S> df = dx;
        if (lc.drop_ffn.size()) df.array() *= lc.drop_ffn.array();
        Mat<S> dact = df * lp.fc2_w.transpose();
        lg.fc2_w += lc.ffn_act.transpose() * df;
        lg.fc2_b.col(0) += df.colwise().sum().transpose();
        Mat<S> dpre =
            (dact.array() * lc.ffn_pre.unaryExpr([](S u) { return gelu_grad(u); }).array())
                .matrix();
        Mat<S> dh2 = dpre * lp.fc1_w.transpose();
        lg.fc1_w += lc.h2.transpose() * dpre;
        lg.fc1_b.col(0) += dpre.colwise().sum().transpose();
        Mat<S> dx_mid = dx + layer_norm_backward(dh2, lp.ln2_g, lc.ln2, lg.ln2_g, lg.ln2_b);

        // attention sublayer: x_mid = x_in + drop(o)
        Mat<S> do_ = dx_mid;
        if (lc.drop_attn.size()) do_.array() *= lc.drop_attn.array();
        Mat<S> dattn = do_ * lp.proj_w.transpose();
        lg.proj_w += lc.attn_out.transpose() * do_;
        lg.proj_b.col(0) += do_.colwise().sum().transpose();

        Mat<S> dqkv = Mat<S>::Zero(n, 3 * D);
        for (int h = 0; h < H; ++h) {
            auto Q = lc.qkv.middleCols(h * dh, dh);
            auto K = lc.qkv.middleCols(D + h * dh, dh);
            auto V = lc.qkv.middleCols(2 * D + h * dh, dh);
            const Mat<S>& probs = lc.attn_probs[h];
            Mat<S> da = dattn.middleCols(h * dh, dh);
            Mat<S> dprobs = da * V.transpose();
            dqkv.middleCols(2 * D + h * dh, dh) += probs.transpose() * da;
            Mat<S> dscores(n, n);
            dscores.setZero();
            for (int i = 0; i < n; ++i) {
                S dot = S(0);
                for (int j = 0; j <= i; ++j) dot += dprobs(i, j) * probs(i, j);
                for (int j = 0; j <= i; ++j)
                    dscores(i, j) = probs(i, j) * (dprobs(i, j) - dot);
            }
            dqkv.middleCols(h * dh, dh) += (dscores * K) * inv_sqrt_dh;
            dqkv.middleCols(D + h * dh, dh) += (dscores.transpose() * Q) * inv_sqrt_dh;
        }
        Mat<S> dh1 = dqkv * lp.qkv_w.transpose();
        lg.qkv_w += lc.h1.transpose() * dqkv;
        lg.qkv_b.col(0) += dqkv.colwise().sum().transpose();
        dx = dx_mid + layer_norm_backward(dh1, lp.ln1_g, lc.ln1, lg.ln1_g, lg.ln1_b);
    }

    if (cache.drop_emb.size()) dx.array() *= cache.drop_emb.array();
    for (int i = 0; i < n; ++i) {
        g.tok_emb.row(cache.tokens[i]) += dx.row(i);
        g.pos_emb.row(i) += dx.row(i);
    }
}

template <class S>
std::vector<Mat<S>*> tensor_list(ParamsT<S>& p) {
    std::vector<Mat<S>*> out;
    visit_params(p, [&](const std::string&, Mat<S>& m) { out.push_back(&m); });
    return out;
}

}  // namespace

ModelParams init_model(const ModelConfig& config) { return init_impl<float>(config); }
ModelParams64 init_model64(const ModelConfig& config) { return init_impl<double>(config); }

template <class S>
ForwardResult forward(const ParamsT<S>& params, const LabeledExample& example) {
    ForwardCache<S> cache;
    run_forward(params, example, cache, nullptr);
    return {static_cast<double>(cache.probs(0)), static_cast<double>(cache.probs(1))};
}

template ForwardResult forward<float>(const ParamsT<float>&, const LabeledExample&);
template ForwardResult forward<double>(const ParamsT<double>&, const LabeledExample&);

template <class S>
ParamsT<S> zero_like(const ParamsT<S>& params) {
    ParamsT<S> z = params;
    visit_params(z, [](const std::string&, Mat<S>& m) { m.setZero(); });
    return z;
}

template ParamsT<float> zero_like<float>(const ParamsT<float>&);
template ParamsT<double> zero_like<double>(const ParamsT<double>&);

template <class S>
double loss_and_gradients(const ParamsT<S>& params, const std::vector<LabeledExample>& batch,
                          ParamsT<S>& grads, Rng* dropout_rng) {
    if (batch.empty()) throw DataError("cannot compute a loss on an empty batch");
    visit_params(grads, [](const std::string&, Mat<S>& m) { m.setZero(); });
    const S inv_b = S(1) / S(batch.size());
    double loss = 0.0;
    ForwardCache<S> cache;
    for (const LabeledExample& ex : batch) {
        if (ex.label != 0 && ex.label != 1) throw DataError("label must be 0 or 1");
        run_forward(params, ex, cache, dropout_rng);
        S p = std::max(cache.probs(ex.label), std::numeric_limits<S>::min());
        loss -= std::log(static_cast<double>(p));
        Eigen::Matrix<S, Eigen::Dynamic, 1> dlogits = cache.probs;
        dlogits(ex.label) -= S(1);
        dlogits *= inv_b;
        run_backward(params, cache, dlogits, grads);
    }
    return loss / static_cast<double>(batch.size());
}

template double loss_and_gradients<float>(const ParamsT<float>&,
                                          const std::vector<LabeledExample>&,
                                          ParamsT<float>&, Rng*);
template double loss_and_gradients<double>(const ParamsT<double>&,
                                           const std::vector<LabeledExample>&,
                                           ParamsT<double>&, Rng*);

double one_cycle_lr(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 0) return cfg.peak_lr;
    double start = cfg.peak_lr / cfg.start_div;
    double final_lr = cfg.peak_lr / cfg.final_div;
    std::int64_t warmup = static_cast<std::int64_t>(cfg.warmup_fraction * total_steps);
    if (step < warmup && warmup > 0) {
        double t = static_cast<double>(step + 1) / static_cast<double>(warmup);
        return start + (cfg.peak_lr - start) * t;
    }
    std::int64_t rest = total_steps - warmup;
    if (rest <= 0) return cfg.peak_lr;
    double t = static_cast<double>(step - warmup) / static_cast<double>(rest);
    return final_lr + 0.5 * (cfg.peak_lr - final_lr) * (1.0 + std::cos(M_PI * t));
}

namespace {

double eval_accuracy(const ModelParams& params, const std::vector<LabeledExample>& examples,
                     double threshold) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        ForwardResult r = forward(params, ex);
        int predicted = r.p_suboptimal > threshold ? 1 : 0;
        if (predicted == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace

TrainResult train(const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& eval_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    if (train_set.empty()) throw DataError("cannot train on an empty dataset");
    model_cfg.validate();

    TrainResult result;
    result.single_class_warning =
        std::all_of(train_set.begin(), train_set.end(),
                    [&](const LabeledExample& e) { return e.label == train_set[0].label; });

    ModelParams params = init_model(model_cfg);
    ModelParams m = zero_like(params);
    ModelParams v = zero_like(params);
    ModelParams grads = zero_like(params);
    auto p_list = tensor_list(params);
    auto m_list = tensor_list(m);
    auto v_list = tensor_list(v);
    auto g_list = tensor_list(grads);

    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const std::int64_t batches_per_epoch =
        (static_cast<std::int64_t>(train_set.size()) + train_cfg.batch_size - 1) /
        train_cfg.batch_size;
    const std::int64_t total_steps = batches_per_epoch * train_cfg.epochs;

    const std::vector<LabeledExample>& held_out = eval_set.empty() ? train_set : eval_set;
    Rng dropout_rng(derive_seed(train_cfg.seed, "dropout"));

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::int64_t step = 0;
    result.best_accuracy = -1.0;

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(train_cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        double last_lr = 0.0;
        for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
            std::vector<LabeledExample> batch;
            for (std::int64_t i = b * train_cfg.batch_size;
                 i < std::min<std::int64_t>((b + 1) * train_cfg.batch_size, train_set.size());
                 ++i)
                batch.push_back(train_set[order[i]]);
            double loss =
                loss_and_gradients(params, batch, grads,
                                   model_cfg.dropout_rate > 0 ? &dropout_rng : nullptr);
            epoch_loss += loss * static_cast<double>(batch.size());

            ++step;
            double lr = one_cycle_lr(train_cfg, step - 1, total_steps);
            last_lr = lr;
            double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t t = 0; t < p_list.size(); ++t) {
                auto& P = *p_list[t];
                auto& M = *m_list[t];
                auto& V = *v_list[t];
                auto& G = *g_list[t];
                M = static_cast<float>(beta1) * M + static_cast<float>(1.0 - beta1) * G;
                V = (static_cast<float>(beta2) * V.array() +
                     static_cast<float>(1.0 - beta2) * G.array().square())
                        .matrix();
                auto mhat = M.array() / static_cast<float>(bc1);
                auto vhat = V.array() / static_cast<float>(bc2);
                P.array() -= static_cast<float>(lr) *
                             (mhat / (vhat.sqrt() + static_cast<float>(eps)) +
                              static_cast<float>(train_cfg.weight_decay) * P.array());
            }
        }

        double acc = eval_accuracy(params, held_out, train_cfg.decision_threshold);
        result.history.push_back({epoch, epoch_loss / static_cast<double>(train_set.size()),
                                  acc, last_lr});
        if (acc > result.best_accuracy) {
            result.best_accuracy = acc;
            result.best_epoch = epoch;
            result.params = params;
        }
    }
    return result;
}

TrainResult train(const std::vector<LabeledExample>& dataset, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg) {
    if (dataset.empty()) throw DataError("cannot train on an empty dataset");
    // query-level split keeps replicas of one query on a single side
    std::vector<std::string> ids;
    for (const auto& ex : dataset)
        if (std::find(ids.begin(), ids.end(), ex.query_id) == ids.end())
            ids.push_back(ex.query_id);
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(train_cfg.seed, "split"));
    rng.shuffle(ids);
    std::size_t n_train = static_cast<std::size_t>(
        std::round(train_cfg.train_fraction * static_cast<double>(ids.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size() > 1 ? ids.size() - 1 : 1);
    std::set<std::string> train_ids(ids.begin(), ids.begin() + n_train);

    std::vector<LabeledExample> train_set, eval_set;
    for (const auto& ex : dataset)
        (train_ids.count(ex.query_id) ? train_set : eval_set).push_back(ex);
    return train(train_set, eval_set, model_cfg, train_cfg);
}

std::vector<QueryExample> augment_permute(const QueryExample& example, int replicas,
                                          std::uint64_t seed) {
    if (replicas < 0) throw ConfigError("replica count must be >= 0");
    std::vector<QueryExample> out;
    out.push_back(example);
    out[0].replica_id = 0;
    for (int rep = 1; rep <= replicas; ++rep) {
        QueryExample q = example;
        q.replica_id = rep;
        for (auto& pair : q.pairs) {
            int n = static_cast<int>(pair.rho.size());
            int fixed = (n + 1) / 2;  // the first ceil(N/2) ranks stay put
            if (n - fixed < 2) continue;
            std::vector<std::size_t> tail;  // indices holding the tail ranks
            for (std::size_t i = 0; i < pair.rho.size(); ++i)
                if (pair.rho[i] > fixed) tail.push_back(i);
            std::vector<int> ranks;
            for (std::size_t i : tail) ranks.push_back(pair.rho[i]);
            std::sort(ranks.begin(), ranks.end());
            Rng rng(derive_seed(seed, example.query_id + "/" + std::to_string(rep),
                                static_cast<std::uint64_t>(pair.k)));
            rng.shuffle(ranks);
            for (std::size_t j = 0; j < tail.size(); ++j) pair.rho[tail[j]] = ranks[j];
        }
        out.push_back(std::move(q));
    }
    return out;
}

LabeledExample encode_example(const QueryExample& example, const Vocabulary& vocab,
                              int max_len, const L1Weights& weights) {
    LabeledExample ex;
    ex.query_id = example.query_id;
    ex.replica_id = example.replica_id;
    ex.label = example.label;
    L1Report report = l1_report(example.pairs, weights);
    ex.l1_aggregate = report.aggregate;
    std::map<int, std::size_t> sizes;
    for (const auto& p : example.pairs)
        if (!p.subplans.empty()) sizes[p.k] = p.subplans.size();
    ex.l1_max = l1_max_aggregate(sizes, weights);
    ex.sequence = encode_sequence(example.pairs, vocab, max_len);
    return ex;
}

PredictOutcome predict(const ModelParams& params, const std::vector<PositionVectorPair>& pairs,
                       const Vocabulary& vocab, const L1Weights& weights, double threshold) {
    QueryExample q;
    q.pairs = pairs;
    LabeledExample ex = encode_example(q, vocab, params.config.max_len, weights);
    PredictOutcome out;
    out.l1 = l1_report(pairs, weights);
    ForwardResult r = forward(params, ex);
    out.p_suboptimal = r.p_suboptimal;
    out.label = r.p_suboptimal > threshold ? PlanLabel::SubOptimal : PlanLabel::Optimal;
    return out;
}

namespace {

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint file truncated");
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write("PSV1", 4);
    std::string cfg = params.config.to_json_text();
    write_pod(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    visit_params(params, [&](const std::string& name, const Mat<float>& m) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::uint64_t>(m.rows()));
        write_pod(out, static_cast<std::uint64_t>(m.cols()));
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(float) * m.size()));
    });
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "PSV1")
        throw DataError("'" + path + "' is not a model checkpoint");
    auto cfg_len = read_pod<std::uint32_t>(in);
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), cfg_len);
    if (!in) throw DataError("checkpoint file truncated");
    ModelConfig cfg = ModelConfig::from_json_text(cfg_text);
    ModelParams params = init_model(cfg);
    visit_params(params, [&](const std::string& name, Mat<float>& m) {
        auto name_len = read_pod<std::uint32_t>(in);
        std::string stored(name_len, '\0');
        in.read(stored.data(), name_len);
        if (stored != name)
            throw DataError("checkpoint section '" + stored + "' does not match expected '" +
                            name + "'");
        auto rows = read_pod<std::uint64_t>(in);
        auto cols = read_pod<std::uint64_t>(in);
        if (rows != static_cast<std::uint64_t>(m.rows()) ||
            cols != static_cast<std::uint64_t>(m.cols()))
            throw DataError("checkpoint section '" + name + "' has unexpected shape");
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(float) * m.size()));
        if (!in) throw DataError("checkpoint file truncated");
    });
    return params;
}

double ConfusionMatrix::accuracy() const {
    std::uint64_t t = total();
    return t == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(t);
}

double ConfusionMatrix::suboptimal_accuracy() const {
    std::uint64_t d = tn + fp;
    return d == 0 ? 0.0 : static_cast<double>(tn) / static_cast<double>(d);
}

void ConfusionMatrix::add(PlanLabel predicted, PlanLabel actual) {
    if (actual == PlanLabel::Optimal)
        predicted == PlanLabel::Optimal ? ++tp : ++fn;
    else
        predicted == PlanLabel::SubOptimal ? ++tn : ++fp;
}

ConfusionMatrix confusion(const std::vector<PlanLabel>& predictions,
                          const std::vector<PlanLabel>& labels) {
    if (predictions.size() != labels.size())
        throw DataError("prediction and label counts differ");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < predictions.size(); ++i) m.add(predictions[i], labels[i]);
    return m;
}

namespace {

int majority_label(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    std::size_t ones = 0;
    for (std::size_t i : idx) ones += static_cast<std::size_t>(labels[i]);
    // exact tie goes to the optimal class
    return 2 * ones > idx.size() ? 1 : 0;
}

double gini(std::size_t ones, std::size_t total) {
    if (total == 0) return 0.0;
    double p = static_cast<double>(ones) / static_cast<double>(total);
    return 2.0 * p * (1.0 - p);
}

}  // namespace

int DecisionTree::predict(double value) const {
    int node = root_;
    while (nodes_[node].left >= 0)
        node = value < nodes_[node].threshold ? nodes_[node].left : nodes_[node].right;
    return nodes_[node].label;
}

int DecisionTree::depth() const {
    std::function<int(int)> rec = [&](int i) -> int {
        if (nodes_[i].left < 0) return 0;
        return 1 + std::max(rec(nodes_[i].left), rec(nodes_[i].right));
    };
    return root_ < 0 ? 0 : rec(root_);
}

DecisionTree DecisionTree::fit(const std::vector<double>& values,
                               const std::vector<int>& labels, int max_depth) {
    if (values.empty() || values.size() != labels.size())
        throw DataError("decision tree needs matching nonempty values and labels");
    DecisionTree tree;
    std::function<int(std::vector<std::size_t>, int)> build =
        [&](std::vector<std::size_t> idx, int depth) -> int {
        std::size_t ones = 0;
        for (std::size_t i : idx) ones += static_cast<std::size_t>(labels[i]);
        bool pure = ones == 0 || ones == idx.size();
        if (pure || depth >= max_depth || idx.size() < 2) {
            tree.nodes_.push_back({0.0, -1, -1, majority_label(labels, idx)});
            return static_cast<int>(tree.nodes_.size()) - 1;
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(values[a], a) < std::tie(values[b], b);
        });
        double parent = gini(ones, idx.size());
        double best_gain = 0.0;
        double best_thr = 0.0;
        std::size_t left_ones = 0;
        bool found = false;
        for (std::size_t pos = 1; pos < idx.size(); ++pos) {
            left_ones += static_cast<std::size_t>(labels[idx[pos - 1]]);
            if (values[idx[pos]] == values[idx[pos - 1]]) continue;
            double thr = 0.5 * (values[idx[pos]] + values[idx[pos - 1]]);
            double wl = static_cast<double>(pos) / static_cast<double>(idx.size());
            double impurity = wl * gini(left_ones, pos) +
                              (1.0 - wl) * gini(ones - left_ones, idx.size() - pos);
            double gain = parent - impurity;
            if (gain > best_gain + 1e-12) {
                best_gain = gain;
                best_thr = thr;
                found = true;
            }
        }
        if (!found) {
            tree.nodes_.push_back({0.0, -1, -1, majority_label(labels, idx)});
            return static_cast<int>(tree.nodes_.size()) - 1;
        }
        std::vector<std::size_t> li, ri;
        for (std::size_t i : idx) (values[i] < best_thr ? li : ri).push_back(i);
        int l = build(std::move(li), depth + 1);
        int r = build(std::move(ri), depth + 1);
        tree.nodes_.push_back({best_thr, l, r, 0});
        return static_cast<int>(tree.nodes_.size()) - 1;
    };
    std::vector<std::size_t> all(values.size());
    std::iota(all.begin(), all.end(), 0);
    tree.root_ = build(std::move(all), 0);
    return tree;
}

std::string DecisionTree::to_json_text() const {
    json nodes = json::array();
    for (const auto& n : nodes_)
        nodes.push_back({{"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"label", n.label}});
    return json{{"root", root_}, {"nodes", nodes}}.dump();
}

DecisionTree DecisionTree::from_json_text(const std::string& text) {
    json j = json::parse(text);
    DecisionTree tree;
    tree.root_ = j.at("root").get<int>();
    for (const auto& jn : j.at("nodes"))
        tree.nodes_.push_back({jn.at("threshold").get<double>(), jn.at("left").get<int>(),
                               jn.at("right").get<int>(), jn.at("label").get<int>()});
    return tree;
}

DecisionTree train_baseline_dt(const std::vector<double>& l1_values,
                               const std::vector<int>& labels,
                               const std::vector<int>& max_depth_grid, int folds,
                               std::uint64_t seed) {
    if (l1_values.size() < 2 || l1_values.size() != labels.size())
        throw DataError("baseline needs at least two labeled values");
    if (max_depth_grid.empty()) throw ConfigError("empty depth grid");
    folds = std::min<int>(folds, static_cast<int>(l1_values.size()));
    if (folds < 2) folds = 2;

    std::vector<std::size_t> order(l1_values.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "dt-folds"));
    rng.shuffle(order);

    std::vector<int> grid = max_depth_grid;
    std::sort(grid.begin(), grid.end());
    int best_depth = grid.front();
    double best_acc = -1.0;
    for (int depth : grid) {
        std::size_t correct = 0, total = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<double> tv;
            std::vector<int> tl;
            std::vector<std::size_t> held;
            for (std::size_t i = 0; i < order.size(); ++i) {
                if (static_cast<int>(i % folds) == f)
                    held.push_back(order[i]);
                else {
                    tv.push_back(l1_values[order[i]]);
                    tl.push_back(labels[order[i]]);
                }
            }
            if (tv.empty() || held.empty()) continue;
            DecisionTree t = DecisionTree::fit(tv, tl, depth);
            for (std::size_t i : held) {
                if (t.predict(l1_values[i]) == labels[i]) ++correct;
                ++total;
            }
        }
        double acc = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
        if (acc > best_acc + 1e-12) {  // ties keep the smaller depth
            best_acc = acc;
            best_depth = depth;
        }
    }
    return DecisionTree::fit(l1_values, labels, best_depth);
}

}  // namespace plansieve
