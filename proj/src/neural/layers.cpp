#include "covpred/neural/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace covpred::neural {

namespace {

void fill_uniform(Mat& m, double bound, Rng& rng) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = rng.uniform(-bound, bound);
}

Mat& create_uniform(ParamStore& store, const std::string& name,
                    Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Mat& m = store.create(name, rows, cols);
    fill_uniform(m, std::sqrt(1.0 / static_cast<double>(cols)), rng);
    return m;
}

Var add_bias(Tape& t, Var m, Var b) {
    // bias is a column vector broadcast across the columns of m
    const Mat& mv = t.value(m);
    const Mat& bv = t.value(b);
    if (bv.cols() != 1 || bv.rows() != mv.rows())
        throw std::invalid_argument("bias shape mismatch");
    Mat out = mv.colwise() + bv.col(0);
    return t.make(std::move(out), [m, b](Tape& tp, const Mat& g) {
        tp.grad_ref(m) += g;
        tp.grad_ref(b) += g.rowwise().sum();
    });
}

}  // namespace

void init_matrix(ParamStore& store, const std::string& name, int rows, int cols, Rng& rng) {
    create_uniform(store, name, rows, cols, rng);
}

void init_dense(ParamStore& store, const std::string& prefix, const DenseSpec& spec, Rng& rng) {
    create_uniform(store, prefix + ".W", spec.output_size, spec.input_size, rng);
    store.create(prefix + ".b", spec.output_size, 1);
}

void init_lstm(ParamStore& store, const std::string& prefix, const LstmCellSpec& spec, Rng& rng) {
    const int H = spec.hidden_size;
    create_uniform(store, prefix + ".W", 4 * H, spec.input_size + H, rng);
    Mat& b = store.create(prefix + ".b", 4 * H, 1);
    b.middleRows(H, H).setOnes();  // forget gate starts open
}

void init_gru(ParamStore& store, const std::string& prefix, const GruCellSpec& spec, Rng& rng) {
    const int H = spec.hidden_size;
    create_uniform(store, prefix + ".Wzr", 2 * H, spec.input_size + H, rng);
    store.create(prefix + ".bzr", 2 * H, 1);
    create_uniform(store, prefix + ".Wc", H, spec.input_size + H, rng);
    store.create(prefix + ".bc", H, 1);
}

void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
    init_dense(store, prefix + ".fc1", {spec.input_size, spec.hidden_size}, rng);
    init_dense(store, prefix + ".fc2", {spec.hidden_size, spec.output_size}, rng);
}

void init_attention(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng) {
    create_uniform(store, prefix + ".Wq", spec.attn_size, spec.query_size, rng);
    create_uniform(store, prefix + ".Wk", spec.attn_size, spec.key_size, rng);
    create_uniform(store, prefix + ".v", spec.attn_size, 1, rng);
}

Var dense(Tape& t, ParamBinder& p, const std::string& prefix, Var x) {
    return add_bias(t, matmul(t, p(prefix + ".W"), x), p(prefix + ".b"));
}

LstmState lstm_initial(Tape& t, const LstmCellSpec& spec) {
    return {t.constant(Mat::Zero(spec.hidden_size, 1)),
            t.constant(Mat::Zero(spec.hidden_size, 1))};
}

LstmState lstm_step(Tape& t, ParamBinder& p, const std::string& prefix,
                    const LstmCellSpec& spec, Var x, const LstmState& prev) {
    const int H = spec.hidden_size;
    Var z = dense(t, p, prefix, vstack(t, {x, prev.h}));
    Var i = sigmoid(t, rows(t, z, 0, H));
    Var f = sigmoid(t, rows(t, z, H, H));
    Var g = tanh(t, rows(t, z, 2 * H, H));
    Var o = sigmoid(t, rows(t, z, 3 * H, H));
    Var c = add(t, cmul(t, f, prev.c), cmul(t, i, g));
    Var h = cmul(t, o, tanh(t, c));
    return {h, c};
}

Var gru_initial(Tape& t, const GruCellSpec& spec) {
    return t.constant(Mat::Zero(spec.hidden_size, 1));
}

Var gru_step(Tape& t, ParamBinder& p, const std::string& prefix,
             const GruCellSpec& spec, Var x, Var h) {
    const int H = spec.hidden_size;
    Var zr = sigmoid(t, add_bias(t, matmul(t, p(prefix + ".Wzr"), vstack(t, {x, h})),
                                 p(prefix + ".bzr")));
    Var z = rows(t, zr, 0, H);
    Var r = rows(t, zr, H, H);
    Var c = tanh(t, add_bias(t, matmul(t, p(prefix + ".Wc"),
                                       vstack(t, {x, cmul(t, r, h)})),
                             p(prefix + ".bc")));
    // h' = h + z * (c - h)
    return add(t, h, cmul(t, z, sub(t, c, h)));
}

Var mlp_forward(Tape& t, ParamBinder& p, const std::string& prefix,
                const MlpSpec& spec, Var x, bool train, Rng& rng) {
    Var hidden = sigmoid(t, dense(t, p, prefix + ".fc1", x));
    Var dropped = dropout(t, hidden, spec.dropout, train, rng);
    return dense(t, p, prefix + ".fc2", dropped);
}

AttentionResult additive_attention(Tape& t, ParamBinder& p, const std::string& prefix,
                                   const AttentionSpec& spec, Var query,
                                   const std::vector<Var>& keys,
                                   const std::vector<Var>& values,
                                   const std::vector<bool>& mask) {
    if (keys.size() != values.size() || keys.size() != mask.size())
        throw std::invalid_argument("attention inputs must align");
    std::vector<int> live;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) live.push_back(static_cast<int>(i));

    AttentionResult out;
    out.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mask.size()));
    if (live.empty()) {
        out.context = t.constant(Mat::Zero(spec.value_size, 1));
        return out;
    }

    Var vt = transpose(t, p(prefix + ".v"));
    Var wq = matmul(t, p(prefix + ".Wq"), query);
    std::vector<Var> scores;
    scores.reserve(live.size());
    for (int i : live) {
        Var e = tanh(t, add(t, wq, matmul(t, p(prefix + ".Wk"), keys[i])));
        scores.push_back(matmul(t, vt, e));
    }
    Var alpha = softmax_cols(t, vstack(t, scores));
    for (std::size_t j = 0; j < live.size(); ++j)
        out.weights(live[j]) = t.value(alpha)(static_cast<Eigen::Index>(j), 0);

    std::vector<Var> live_values;
    live_values.reserve(live.size());
    for (int i : live) live_values.push_back(values[i]);
    out.context = matmul(t, hstack(t, live_values), alpha);
    return out;
}

}  // namespace covpred::neural
