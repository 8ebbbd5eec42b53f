#include "featrestore/autograd.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace featrestore::ag {

namespace {

void require(bool cond, const char* what) {
    if (!cond) {
        throw std::invalid_argument(std::string("autograd shape error: ") + what);
    }
}

Tape& tape_of(Var a, [[maybe_unused]] Var b) {
    assert(a.tape != nullptr && a.tape == b.tape);
    return *a.tape;
}

}  // namespace

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
    Var v = push(value, true, nullptr);
    nodes_[v.id].grad_sink = grad_sink;
    return v;
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Matrix& contribution) {
    Node& node = nodes_[v.id];
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.size() == 0) {
        node.grad = contribution;
    } else {
        node.grad += contribution;
    }
}

void Tape::backward(Var out) {
    if (value(out).rows() != 1 || value(out).cols() != 1) {
        throw std::invalid_argument("backward() needs a scalar output");
    }
    for (auto& node : nodes_) {
        node.grad.resize(0, 0);
    }
    if (!nodes_[out.id].requires_grad) {
        return;
    }
    nodes_[out.id].grad = Matrix::Ones(1, 1);
    for (int i = out.id; i >= 0; --i) {
        Node& node = nodes_[i];
        if (node.grad.size() == 0) {
            continue;
        }
        if (node.backward) {
            node.backward(*this, node.grad);
        }
        if (node.grad_sink != nullptr) {
            if (node.grad_sink->size() == 0) {
                *node.grad_sink = Matrix::Zero(node.value.rows(), node.value.cols());
            }
            *node.grad_sink += node.grad;
        }
    }
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require(a.cols() == b.rows(), "matmul inner dimension");
    Matrix out = a.value() * b.value();
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
        if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
    Matrix out = a.value() + b.value();
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
    Matrix out = a.value() - b.value();
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b)) tp.accumulate(b, -g);
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
    Matrix out = a.value().cwiseProduct(b.value());
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
        if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    return t.push(a.value() * s, t.requires_grad(a),
                  [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var scale_rows(Var a, const Vector& coef) {
    Tape& t = *a.tape;
    require(coef.size() == a.rows(), "scale_rows coefficient count");
    Matrix out = coef.asDiagonal() * a.value();
    return t.push(std::move(out), t.requires_grad(a), [a, coef](Tape& tp, const Matrix& g) {
        tp.accumulate(a, coef.asDiagonal() * g);
    });
}

Var add_row(Var a, Var row) {
    Tape& t = tape_of(a, row);
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row");
    Matrix out = a.value().rowwise() + row.value().row(0);
    bool rg = t.requires_grad(a) || t.requires_grad(row);
    return t.push(std::move(out), rg, [a, row](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
    });
}

Var repeat_rows(Var a, Eigen::Index n) {
    Tape& t = *a.tape;
    const Eigen::Index rows = a.rows();
    Matrix out(rows * n, a.cols());
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index k = 0; k < n; ++k) {
            out.row(r * n + k) = a.value().row(r);
        }
    }
    return t.push(std::move(out), t.requires_grad(a), [a, n, rows](Tape& tp, const Matrix& g) {
        Matrix ga = Matrix::Zero(rows, g.cols());
        for (Eigen::Index r = 0; r < rows; ++r) {
            ga.row(r) = g.middleRows(r * n, n).colwise().sum();
        }
        tp.accumulate(a, ga);
    });
}

Var tile(Var a, Eigen::Index copies) {
    Tape& t = *a.tape;
    const Eigen::Index n = a.rows();
    Matrix out(n * copies, a.cols());
    for (Eigen::Index c = 0; c < copies; ++c) {
        out.middleRows(c * n, n) = a.value();
    }
    return t.push(std::move(out), t.requires_grad(a), [a, n, copies](Tape& tp, const Matrix& g) {
        Matrix ga = Matrix::Zero(n, g.cols());
        for (Eigen::Index c = 0; c < copies; ++c) {
            ga += g.middleRows(c * n, n);
        }
        tp.accumulate(a, ga);
    });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    Tape& t = *a.tape;
    require(rows * cols == a.value().size(), "reshape element count");
    const Eigen::Index in_rows = a.rows();
    const Eigen::Index in_cols = a.cols();
    Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
    return t.push(std::move(out), t.requires_grad(a),
                  [a, in_rows, in_cols](Tape& tp, const Matrix& g) {
                      tp.accumulate(a, Eigen::Map<const Matrix>(g.data(), in_rows, in_cols));
                  });
}

Var concat_groups(Var a, Eigen::Index ga, Var b, Eigen::Index gb) {
    Tape& t = tape_of(a, b);
    require(a.cols() == b.cols(), "concat_groups width");
    require(a.rows() % ga == 0 && b.rows() % gb == 0 && a.rows() / ga == b.rows() / gb,
            "concat_groups batch");
    const Eigen::Index batch = a.rows() / ga;
    const Eigen::Index g = ga + gb;
    Matrix out(batch * g, a.cols());
    for (Eigen::Index s = 0; s < batch; ++s) {
        out.middleRows(s * g, ga) = a.value().middleRows(s * ga, ga);
        out.middleRows(s * g + ga, gb) = b.value().middleRows(s * gb, gb);
    }
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b, ga, gb, batch, g](Tape& tp, const Matrix& grad) {
        if (tp.requires_grad(a)) {
            Matrix da(batch * ga, grad.cols());
            for (Eigen::Index s = 0; s < batch; ++s) da.middleRows(s * ga, ga) = grad.middleRows(s * g, ga);
            tp.accumulate(a, da);
        }
        if (tp.requires_grad(b)) {
            Matrix db(batch * gb, grad.cols());
            for (Eigen::Index s = 0; s < batch; ++s) db.middleRows(s * gb, gb) = grad.middleRows(s * g + ga, gb);
            tp.accumulate(b, db);
        }
    });
}

Var take_groups(Var a, Eigen::Index group, Eigen::Index offset, Eigen::Index count) {
    Tape& t = *a.tape;
    require(a.rows() % group == 0 && offset + count <= group, "take_groups");
    const Eigen::Index batch = a.rows() / group;
    Matrix out(batch * count, a.cols());
    for (Eigen::Index s = 0; s < batch; ++s) {
        out.middleRows(s * count, count) = a.value().middleRows(s * group + offset, count);
    }
    const Eigen::Index in_rows = a.rows();
    return t.push(std::move(out), t.requires_grad(a),
                  [a, group, offset, count, batch, in_rows](Tape& tp, const Matrix& g) {
                      Matrix ga = Matrix::Zero(in_rows, g.cols());
                      for (Eigen::Index s = 0; s < batch; ++s) {
                          ga.middleRows(s * group + offset, count) = g.middleRows(s * count, count);
                      }
                      tp.accumulate(a, ga);
                  });
}

Var gather_rows(Var a, const std::vector<Eigen::Index>& rows) {
    Tape& t = *a.tape;
    Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows index");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    const Eigen::Index in_rows = a.rows();
    return t.push(std::move(out), t.requires_grad(a), [a, rows, in_rows](Tape& tp, const Matrix& g) {
        Matrix ga = Matrix::Zero(in_rows, g.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        }
        tp.accumulate(a, ga);
    });
}

namespace {

// Elementwise op whose derivative is precomputed during the forward pass.
template <class F, class D>
Var elementwise(Var a, F f, D df) {
    Tape& t = *a.tape;
    Matrix out = a.value().unaryExpr(f);
    if (!t.requires_grad(a)) {
        return t.push(std::move(out), false, nullptr);
    }
    Matrix deriv = a.value().unaryExpr(df);
    return t.push(std::move(out), true, [a, deriv = std::move(deriv)](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g.cwiseProduct(deriv));
    });
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var sigmoid(Var a) {
    return elementwise(
        a, [](double x) { return logistic(x); },
        [](double x) {
            double s = logistic(x);
            return s * (1.0 - s);
        });
}

Var silu(Var a) {
    return elementwise(
        a, [](double x) { return x * logistic(x); },
        [](double x) {
            double s = logistic(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

Var gelu(Var a) {
    return elementwise(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
        [](double x) {
            double u = kGeluC * (x + kGeluA * x * x * x);
            double th = std::tanh(u);
            double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
    Tape& t = tape_of(a, gamma);
    const Eigen::Index n = a.rows();
    const Eigen::Index c = a.cols();
    require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
            "layer_norm affine width");
    Matrix xhat(n, c);
    Vector inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        auto row = a.value().row(r);
        double mean = row.mean();
        double var = (row.array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (row.array() - mean) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
    out.rowwise() += beta.value().row(0);
    bool rg = t.requires_grad(a) || t.requires_grad(gamma) || t.requires_grad(beta);
    return t.push(std::move(out), rg,
                  [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), c](
                      Tape& tp, const Matrix& g) {
                      if (tp.requires_grad(gamma)) {
                          tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                      }
                      if (tp.requires_grad(beta)) {
                          tp.accumulate(beta, g.colwise().sum());
                      }
                      if (tp.requires_grad(a)) {
                          Matrix dxhat = (g.array().rowwise() * tp.value(gamma).row(0).array()).matrix();
                          Matrix da(g.rows(), c);
                          for (Eigen::Index r = 0; r < g.rows(); ++r) {
                              double m1 = dxhat.row(r).mean();
                              double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                              da.row(r) = inv_std(r) *
                                          (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
                          }
                          tp.accumulate(a, da);
                      }
                  });
}

Var attention(Var q, Var k, Var v, Eigen::Index gq, Eigen::Index gk, Eigen::Index heads) {
    Tape& t = tape_of(q, k);
    require(q.cols() == k.cols(), "attention query/key width");
    require(k.rows() == v.rows(), "attention key/value rows");
    require(q.cols() % heads == 0 && v.cols() % heads == 0, "attention heads divide width");
    require(q.rows() % gq == 0 && k.rows() % gk == 0 && q.rows() / gq == k.rows() / gk,
            "attention batch grouping");
    const Eigen::Index batch = q.rows() / gq;
    const Eigen::Index dh = q.cols() / heads;
    const Eigen::Index dvh = v.cols() / heads;
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));

    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    const Matrix& V = v.value();
    Matrix out(q.rows(), v.cols());
    // probs[b*heads + h] is the gq x gk softmax matrix.
    std::vector<Matrix> probs(static_cast<std::size_t>(batch * heads));
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index h = 0; h < heads; ++h) {
            auto qb = Q.block(b * gq, h * dh, gq, dh);
            auto kb = K.block(b * gk, h * dh, gk, dh);
            auto vb = V.block(b * gk, h * dvh, gk, dvh);
            Matrix p = (qb * kb.transpose()) * s;
            for (Eigen::Index r = 0; r < gq; ++r) {
                double mx = p.row(r).maxCoeff();
                p.row(r) = (p.row(r).array() - mx).exp();
                p.row(r) /= p.row(r).sum();
            }
            out.block(b * gq, h * dvh, gq, dvh).noalias() = p * vb;
            probs[static_cast<std::size_t>(b * heads + h)] = std::move(p);
        }
    }
    bool rg = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v);
    if (!rg) {
        return t.push(std::move(out), false, nullptr);
    }
    return t.push(std::move(out), true,
                  [q, k, v, gq, gk, heads, batch, dh, dvh, s, probs = std::move(probs)](
                      Tape& tp, const Matrix& g) {
                      const Matrix& Q = tp.value(q);
                      const Matrix& K = tp.value(k);
                      const Matrix& V = tp.value(v);
                      Matrix dq = Matrix::Zero(Q.rows(), Q.cols());
                      Matrix dk = Matrix::Zero(K.rows(), K.cols());
                      Matrix dv = Matrix::Zero(V.rows(), V.cols());
                      for (Eigen::Index b = 0; b < batch; ++b) {
                          for (Eigen::Index h = 0; h < heads; ++h) {
                              const Matrix& p = probs[static_cast<std::size_t>(b * heads + h)];
                              auto gb = g.block(b * gq, h * dvh, gq, dvh);
                              auto vb = V.block(b * gk, h * dvh, gk, dvh);
                              auto qb = Q.block(b * gq, h * dh, gq, dh);
                              auto kb = K.block(b * gk, h * dh, gk, dh);
                              dv.block(b * gk, h * dvh, gk, dvh).noalias() += p.transpose() * gb;
                              Matrix dp = gb * vb.transpose();
                              Vector rowdot = dp.cwiseProduct(p).rowwise().sum();
                              Matrix ds = p.cwiseProduct((dp.colwise() - rowdot));
                              dq.block(b * gq, h * dh, gq, dh).noalias() += (ds * kb) * s;
                              dk.block(b * gk, h * dh, gk, dh).noalias() += (ds.transpose() * qb) * s;
                          }
                      }
                      tp.accumulate(q, dq);
                      tp.accumulate(k, dk);
                      tp.accumulate(v, dv);
                  });
}

Var sum_squared_error(Var a, const Matrix& target) {
    Tape& t = *a.tape;
    require(a.rows() == target.rows() && a.cols() == target.cols(), "sum_squared_error");
    Matrix diff = a.value() - target;
    Matrix out(1, 1);
    out(0, 0) = diff.squaredNorm();
    return t.push(std::move(out), t.requires_grad(a), [a, diff = std::move(diff)](Tape& tp, const Matrix& g) {
        tp.accumulate(a, diff * (2.0 * g(0, 0)));
    });
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Eigen::Index n = logits.rows();
    require(static_cast<Eigen::Index>(labels.size()) == n && n > 0, "cross_entropy labels");
    Matrix p(n, logits.cols());
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        auto row = logits.value().row(r);
        double mx = row.maxCoeff();
        p.row(r) = (row.array() - mx).exp();
        double z = p.row(r).sum();
        p.row(r) /= z;
        const int y = labels[static_cast<std::size_t>(r)];
        require(y >= 0 && y < logits.cols(), "cross_entropy label range");
        total += -(row(y) - mx - std::log(z));
    }
    Matrix out(1, 1);
    out(0, 0) = total / static_cast<double>(n);
    return t.push(std::move(out), t.requires_grad(logits),
                  [logits, labels, p = std::move(p), n](Tape& tp, const Matrix& g) {
                      Matrix d = p;
                      for (Eigen::Index r = 0; r < n; ++r) d(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
                      tp.accumulate(logits, d * (g(0, 0) / static_cast<double>(n)));
                  });
}

}  // namespace featrestore::ag
