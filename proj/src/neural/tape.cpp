#include "covpred/neural/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace covpred::neural {

namespace {

void require(bool ok, const std::string& why) {
    if (!ok) throw std::invalid_argument("tape: " + why);
}

std::string shape(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            std::string(op) + " shape mismatch " + shape(a) + " vs " + shape(b));
}

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int Tape::check(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
            "invalid Var id " + std::to_string(v.id));
    return v.id;
}

Var Tape::constant(Mat value) { return make(std::move(value), nullptr); }

Var Tape::make(Mat value, Backprop backprop) {
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
    const int r = check(root);
    require(nodes_[r].value.size() == 1, "backward root must be scalar");
    nodes_[r].grad(0, 0) = 1.0;
    for (int i = r; i >= 0; --i) {
        if (nodes_[i].backprop) nodes_[i].backprop(*this, nodes_[i].grad);
    }
}

void Tape::clear() { nodes_.clear(); }

Var add(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "add");
    return t.make(t.value(a) + t.value(b), [a, b](Tape& tp, const Mat& g) {
        tp.grad_ref(a) += g;
        tp.grad_ref(b) += g;
    });
}

Var sub(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "sub");
    return t.make(t.value(a) - t.value(b), [a, b](Tape& tp, const Mat& g) {
        tp.grad_ref(a) += g;
        tp.grad_ref(b) -= g;
    });
}

Var cmul(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "cmul");
    return t.make(t.value(a).cwiseProduct(t.value(b)),
                  [a, b](Tape& tp, const Mat& g) {
                      tp.grad_ref(a) += g.cwiseProduct(tp.value(b));
                      tp.grad_ref(b) += g.cwiseProduct(tp.value(a));
                  });
}

Var cdiv(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "cdiv");
    return t.make(t.value(a).cwiseQuotient(t.value(b)),
                  [a, b](Tape& tp, const Mat& g) {
                      const Mat& bv = tp.value(b);
                      tp.grad_ref(a) += g.cwiseQuotient(bv);
                      tp.grad_ref(b) -= g.cwiseProduct(tp.value(a))
                                            .cwiseQuotient(bv.cwiseProduct(bv));
                  });
}

Var matmul(Tape& t, Var a, Var b) {
    require(t.value(a).cols() == t.value(b).rows(),
            "matmul inner dims " + shape(t.value(a)) + " vs " + shape(t.value(b)));
    return t.make(t.value(a) * t.value(b), [a, b](Tape& tp, const Mat& g) {
        tp.grad_ref(a) += g * tp.value(b).transpose();
        tp.grad_ref(b) += tp.value(a).transpose() * g;
    });
}

Var affine(Tape& t, Var x, double a, double b) {
    Mat out = ((a * t.value(x)).array() + b).matrix();
    return t.make(std::move(out), [x, a](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += a * g;
    });
}

Var sigmoid(Tape& t, Var x) {
    Mat y = t.value(x).unaryExpr([](double v) { return scalar_sigmoid(v); });
    const Var self{static_cast<int>(t.size())};  // id assigned by make below
    return t.make(std::move(y), [x, self](Tape& tp, const Mat& g) {
        const Mat& yv = tp.value(self);
        tp.grad_ref(x) +=
            g.cwiseProduct((yv.array() * (1.0 - yv.array())).matrix());
    });
}

Var tanh(Tape& t, Var x) {
    Mat y = t.value(x).array().tanh().matrix();
    const Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), [x, self](Tape& tp, const Mat& g) {
        const Mat& yv = tp.value(self);
        tp.grad_ref(x) += g.cwiseProduct((1.0 - yv.array().square()).matrix());
    });
}

Var softplus(Tape& t, Var x) {
    Mat y = t.value(x).unaryExpr([](double v) { return stable_softplus(v); });
    return t.make(std::move(y), [x](Tape& tp, const Mat& g) {
        const Mat s = tp.value(x).unaryExpr([](double v) { return scalar_sigmoid(v); });
        tp.grad_ref(x) += g.cwiseProduct(s);
    });
}

Var exp(Tape& t, Var x) {
    Mat y = t.value(x).array().exp().matrix();
    const Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), [x, self](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += g.cwiseProduct(tp.value(self));
    });
}

Var log(Tape& t, Var x) {
    Mat y = t.value(x).array().log().matrix();
    return t.make(std::move(y), [x](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += g.cwiseQuotient(tp.value(x));
    });
}

Var square(Tape& t, Var x) {
    Mat y = t.value(x).array().square().matrix();
    return t.make(std::move(y), [x](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += 2.0 * g.cwiseProduct(tp.value(x));
    });
}

Var sum(Tape& t, Var x) {
    Mat out(1, 1);
    out(0, 0) = t.value(x).sum();
    return t.make(std::move(out), [x](Tape& tp, const Mat& g) {
        tp.grad_ref(x).array() += g(0, 0);
    });
}

Var mean_cols(Tape& t, Var x) {
    const Mat& xv = t.value(x);
    require(xv.cols() > 0, "mean_cols of empty matrix");
    Mat out = xv.rowwise().mean();
    const double inv = 1.0 / static_cast<double>(xv.cols());
    return t.make(std::move(out), [x, inv](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += inv * g.replicate(1, tp.value(x).cols());
    });
}

Var vstack(Tape& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "vstack of nothing");
    const Eigen::Index cols = t.value(parts[0]).cols();
    Eigen::Index total = 0;
    for (Var p : parts) {
        require(t.value(p).cols() == cols, "vstack column mismatch");
        total += t.value(p).rows();
    }
    Mat out(total, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        out.middleRows(at, t.value(p).rows()) = t.value(p);
        at += t.value(p).rows();
    }
    return t.make(std::move(out), [parts](Tape& tp, const Mat& g) {
        Eigen::Index at2 = 0;
        for (Var p : parts) {
            const Eigen::Index r = tp.value(p).rows();
            tp.grad_ref(p) += g.middleRows(at2, r);
            at2 += r;
        }
    });
}

Var hstack(Tape& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "hstack of nothing");
    const Eigen::Index rows_n = t.value(parts[0]).rows();
    Eigen::Index total = 0;
    for (Var p : parts) {
        require(t.value(p).rows() == rows_n, "hstack row mismatch");
        total += t.value(p).cols();
    }
    Mat out(rows_n, total);
    Eigen::Index at = 0;
    for (Var p : parts) {
        out.middleCols(at, t.value(p).cols()) = t.value(p);
        at += t.value(p).cols();
    }
    return t.make(std::move(out), [parts](Tape& tp, const Mat& g) {
        Eigen::Index at2 = 0;
        for (Var p : parts) {
            const Eigen::Index c = tp.value(p).cols();
            tp.grad_ref(p) += g.middleCols(at2, c);
            at2 += c;
        }
    });
}

Var rows(Tape& t, Var x, int start, int count) {
    require(start >= 0 && count >= 0 &&
                start + count <= t.value(x).rows(),
            "rows slice out of range");
    return t.make(t.value(x).middleRows(start, count),
                  [x, start, count](Tape& tp, const Mat& g) {
                      tp.grad_ref(x).middleRows(start, count) += g;
                  });
}

Var transpose(Tape& t, Var x) {
    return t.make(t.value(x).transpose(), [x](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += g.transpose();
    });
}

Var softmax_cols(Tape& t, Var x) {
    const Mat& xv = t.value(x);
    Mat y(xv.rows(), xv.cols());
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
        const Eigen::ArrayXd shifted = xv.col(c).array() - xv.col(c).maxCoeff();
        const Eigen::ArrayXd e = shifted.exp();
        y.col(c) = (e / e.sum()).matrix();
    }
    const Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), [x, self](Tape& tp, const Mat& g) {
        const Mat& yv = tp.value(self);
        Mat& gx = tp.grad_ref(x);
        for (Eigen::Index c = 0; c < yv.cols(); ++c) {
            const Eigen::ArrayXd yc = yv.col(c).array();
            const double dot = (g.col(c).array() * yc).sum();
            gx.col(c).array() += yc * (g.col(c).array() - dot);
        }
    });
}

Var clamp(Tape& t, Var x, double lo, double hi) {
    require(lo < hi, "clamp needs lo < hi");
    Mat y = t.value(x).array().max(lo).min(hi).matrix();
    return t.make(std::move(y), [x, lo, hi](Tape& tp, const Mat& g) {
        const Mat& xv = tp.value(x);
        Mat pass = ((xv.array() > lo) && (xv.array() < hi)).cast<double>().matrix();
        tp.grad_ref(x) += g.cwiseProduct(pass);
    });
}

Var dropout(Tape& t, Var x, double p, bool train, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout rate must be in [0, 1)");
    if (!train || p == 0.0) return x;
    const Mat& xv = t.value(x);
    Mat mask(xv.rows(), xv.cols());
    const double keep = 1.0 - p;
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            mask(r, c) = rng.uniform() < p ? 0.0 : 1.0 / keep;
    return t.make(xv.cwiseProduct(mask), [x, mask](Tape& tp, const Mat& g) {
        tp.grad_ref(x) += g.cwiseProduct(mask);
    });
}

}  // namespace covpred::neural
