#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "covpred/rng.hpp"

namespace covpred::neural {

using Mat = Eigen::MatrixXd;

/// Handle to a node on a Tape; valid until Tape::clear().
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Dynamically recorded computation trace. Operations append nodes in
/// evaluation order, so reverse iteration is a topological backward sweep.
/// One tape is owned by one forward/backward pass; not thread-safe.
class Tape {
public:
    /// Backprop closure: given this node's output gradient, accumulate into
    /// the input nodes' grads via grad_ref.
    using Backprop = std::function<void(Tape&, const Mat&)>;

    Var constant(Mat value);

    /// Low-level node constructor used by the op free functions.
    Var make(Mat value, Backprop backprop);

    const Mat& value(Var v) const { return nodes_[check(v)].value; }
    const Mat& grad(Var v) const { return nodes_[check(v)].grad; }
    Mat& grad_ref(Var v) { return nodes_[check(v)].grad; }

    /// Seeds d(root)/d(root) = 1 and sweeps the trace in reverse. root must
    /// be scalar (1x1).
    void backward(Var root);

    void clear();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        Backprop backprop;
    };

    int check(Var v) const;

    std::vector<Node> nodes_;
};

// ---- elementwise and structural operations ----

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var cmul(Tape& t, Var a, Var b);  ///< coefficient-wise product
Var cdiv(Tape& t, Var a, Var b);  ///< coefficient-wise quotient
Var matmul(Tape& t, Var a, Var b);
Var affine(Tape& t, Var x, double a, double b);  ///< a*x + b
Var sigmoid(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var softplus(Tape& t, Var x);
Var exp(Tape& t, Var x);
Var log(Tape& t, Var x);
Var square(Tape& t, Var x);
Var sum(Tape& t, Var x);        ///< 1x1 total
Var mean_cols(Tape& t, Var x);  ///< column-vector mean across columns
Var vstack(Tape& t, const std::vector<Var>& parts);
Var hstack(Tape& t, const std::vector<Var>& parts);
Var rows(Tape& t, Var x, int start, int count);
Var transpose(Tape& t, Var x);
Var softmax_cols(Tape& t, Var x);  ///< softmax independently per column
/// Pass-through inside (lo, hi), zero gradient outside.
Var clamp(Tape& t, Var x, double lo, double hi);
/// Inverted dropout: scales kept entries by 1/(1-p) at train time and is
/// the identity in eval mode.
Var dropout(Tape& t, Var x, double p, bool train, Rng& rng);

}  // namespace covpred::neural
