#include "listen/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "listen/errors.hpp"

namespace listen::ag {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

}  // namespace

const Mat& Var::value() const { return tape->value(id); }

Var Tape::constant(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Mat value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = record_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Param& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = record_ && p.trainable;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Mat value, std::initializer_list<int> parents, BackwardFn fn) {
    return push(std::move(value), std::vector<int>(parents), std::move(fn));
}

Var Tape::push(Mat value, const std::vector<int>& parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    if (record_) {
        for (int p : parents) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
        if (n.requires_grad) n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Mat& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var out) {
    if (!record_) throw ArgumentError("backward on a non-recording tape");
    const Mat& v = value(out.id);
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("backward needs a 1x1 output");
    if (!requires_grad(out.id)) return;
    grad_buffer(out.id)(0, 0) += 1.0;
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param != nullptr && n.param->trainable) {
            Param& p = *n.param;
            if (p.grad.size() == 0) p.zero_grad();
            p.grad += n.grad;
        }
    }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Mat out = a.value() * b.value();
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.requires_grad(ia)) t.grad_buffer(ia).noalias() += g * t.value(ib).transpose();
        if (t.requires_grad(ib)) t.grad_buffer(ib).noalias() += t.value(ia).transpose() * g;
    });
}

Var matmul_bt(Var a, Var b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_bt: inner dimensions differ");
    Mat out = a.value() * b.value().transpose();
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.requires_grad(ia)) t.grad_buffer(ia).noalias() += g * t.value(ib);
        if (t.requires_grad(ib)) t.grad_buffer(ib).noalias() += g.transpose() * t.value(ia);
    });
}

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Mat out = a.value() + b.value();
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
        if (t.requires_grad(ib)) t.grad_buffer(ib) += g;
    });
}

Var add_row(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    Mat out = a.value().rowwise() + RowVec(row.value().row(0));
    const int ia = a.id, ir = row.id;
    return a.tape->push(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
        if (t.requires_grad(ir)) t.grad_buffer(ir) += g.colwise().sum();
    });
}

Var scale(Var a, double s) {
    Mat out = a.value() * s;
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, s](Tape& t, int self) {
        t.grad_buffer(ia) += t.upstream(self) * s;
    });
}

Var gelu(Var a) {
    const Mat& x = a.value();
    Mat out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Mat& xv = t.value(ia);
        Mat d = xv.unaryExpr([](double v) {
            const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        });
        t.grad_buffer(ia) += t.upstream(self).cwiseProduct(d);
    });
}

Var tanh(Var a) {
    Mat out = a.value().array().tanh().matrix();
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Mat& y = t.value(self);
        t.grad_buffer(ia) += t.upstream(self).cwiseProduct((1.0 - y.array().square()).matrix());
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Mat& xv = x.value();
    const Eigen::Index n = xv.cols();
    if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
        throw ShapeError("layer_norm: gain/bias must be 1 x cols");
    Mat xhat(xv.rows(), n);
    Eigen::VectorXd inv_std(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
    out.rowwise() += RowVec(bias.value().row(0));
    const int ix = x.id, ig = gain.id, ib = bias.id;
    return x.tape->push(std::move(out), {ix, ig, ib},
                        [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                            const Mat& g = t.upstream(self);
                            if (t.requires_grad(ig)) t.grad_buffer(ig) += g.cwiseProduct(xhat).colwise().sum();
                            if (t.requires_grad(ib)) t.grad_buffer(ib) += g.colwise().sum();
                            if (t.requires_grad(ix)) {
                                const auto gain_row = t.value(ig).row(0).array();
                                Mat& gx = t.grad_buffer(ix);
                                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                                    const Eigen::ArrayXd dxhat = (g.row(r).array() * gain_row).transpose();
                                    const Eigen::ArrayXd xh = xhat.row(r).array().transpose();
                                    const double m1 = dxhat.mean();
                                    const double m2 = (dxhat * xh).mean();
                                    gx.row(r).array() += (inv_std(r) * (dxhat - m1 - xh * m2)).transpose();
                                }
                            }
                        });
}

Mat softmax_rows(const Mat& a) {
    Mat out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double m = a.row(r).maxCoeff();
        out.row(r) = (a.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

RowVec softmax(const RowVec& logits) {
    const double m = logits.maxCoeff();
    RowVec e = (logits.array() - m).exp();
    return e / e.sum();
}

Var softmax_rows(Var a, bool causal) {
    const Mat& x = a.value();
    Mat p = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Eigen::Index n = causal ? std::min<Eigen::Index>(r + 1, x.cols()) : x.cols();
        const double m = x.row(r).head(n).maxCoeff();
        p.row(r).head(n) = (x.row(r).head(n).array() - m).exp();
        p.row(r).head(n) /= p.row(r).head(n).sum();
    }
    const int ia = a.id;
    return a.tape->push(std::move(p), {ia}, [ia](Tape& t, int self) {
        const Mat& pv = t.value(self);
        const Mat& g = t.upstream(self);
        const Eigen::VectorXd dots = g.cwiseProduct(pv).rowwise().sum();
        t.grad_buffer(ia) += pv.cwiseProduct(g.colwise() - dots);
    });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || n < 0 || start + n > a.cols()) throw ShapeError("slice_cols out of range");
    Mat out = a.value().middleCols(start, n);
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, start, n](Tape& t, int self) {
        t.grad_buffer(ia).middleCols(start, n) += t.upstream(self);
    });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || n < 0 || start + n > a.rows()) throw ShapeError("slice_rows out of range");
    Mat out = a.value().middleRows(start, n);
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, start, n](Tape& t, int self) {
        t.grad_buffer(ia).middleRows(start, n) += t.upstream(self);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    Mat out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleCols(off, p.cols()) = p.value();
        ids.push_back(p.id);
        offsets.push_back(off);
        off += p.cols();
    }
    return parts[0].tape->push(std::move(out), ids, [ids, offsets](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.requires_grad(ids[k])) continue;
            Mat& gb = t.grad_buffer(ids[k]);
            gb += g.middleCols(offsets[k], gb.cols());
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += p.rows();
    }
    Mat out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleRows(off, p.rows()) = p.value();
        ids.push_back(p.id);
        offsets.push_back(off);
        off += p.rows();
    }
    return parts[0].tape->push(std::move(out), ids, [ids, offsets](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.requires_grad(ids[k])) continue;
            Mat& gb = t.grad_buffer(ids[k]);
            gb += g.middleRows(offsets[k], gb.rows());
        }
    });
}

Var gather_rows(Var table, std::span<const int> ids) {
    const Mat& tv = table.value();
    Mat out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows()) throw ShapeError("gather_rows: id out of range");
        out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
    }
    const int it = table.id;
    std::vector<int> idv(ids.begin(), ids.end());
    return table.tape->push(std::move(out), {it}, [it, idv = std::move(idv)](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        Mat& gt = t.grad_buffer(it);
        for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
    });
}

Var softmax_weighted_sum(Var logits, std::span<const Mat* const> layers) {
    if (logits.rows() != 1 || static_cast<std::size_t>(logits.cols()) != layers.size())
        throw ShapeError("softmax_weighted_sum: need one logit per layer");
    if (layers.empty()) throw ShapeError("softmax_weighted_sum: no layers");
    const RowVec w = softmax(RowVec(logits.value().row(0)));
    Mat out = Mat::Zero(layers[0]->rows(), layers[0]->cols());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        require_same_shape(*layers[l], out, "softmax_weighted_sum");
        out += w(static_cast<Eigen::Index>(l)) * *layers[l];
    }
    const int il = logits.id;
    std::vector<const Mat*> refs(layers.begin(), layers.end());
    return logits.tape->push(std::move(out), {il}, [il, w, refs = std::move(refs)](Tape& t, int self) {
        const Mat& g = t.upstream(self);
        RowVec dw(static_cast<Eigen::Index>(refs.size()));
        for (std::size_t l = 0; l < refs.size(); ++l) dw(static_cast<Eigen::Index>(l)) = g.cwiseProduct(*refs[l]).sum();
        const double inner = dw.dot(w);
        t.grad_buffer(il).row(0) += (w.array() * (dw.array() - inner)).matrix();
    });
}

Var nll_sum(Var logits, std::span<const int> targets, std::span<const char> mask) {
    const Mat& x = logits.value();
    const auto rows = static_cast<std::size_t>(x.rows());
    if (targets.size() != rows || mask.size() != rows) throw ShapeError("nll_sum: targets/mask not aligned with logits");
    Mat probs = Mat::Zero(x.rows(), x.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        const auto ri = static_cast<Eigen::Index>(r);
        if (targets[r] < 0 || targets[r] >= x.cols()) throw ShapeError("nll_sum: target id out of range");
        const double m = x.row(ri).maxCoeff();
        probs.row(ri) = (x.row(ri).array() - m).exp();
        const double z = probs.row(ri).sum();
        probs.row(ri) /= z;
        total += -(x(ri, targets[r]) - m - std::log(z));
    }
    Mat out(1, 1);
    out(0, 0) = total;
    const int il = logits.id;
    std::vector<int> tv(targets.begin(), targets.end());
    std::vector<char> mv(mask.begin(), mask.end());
    return logits.tape->push(std::move(out), {il},
                             [il, probs = std::move(probs), tv = std::move(tv), mv = std::move(mv)](Tape& t, int self) {
                                 const double g = t.upstream(self)(0, 0);
                                 Mat& gl = t.grad_buffer(il);
                                 for (std::size_t r = 0; r < tv.size(); ++r) {
                                     if (!mv[r]) continue;
                                     const auto ri = static_cast<Eigen::Index>(r);
                                     gl.row(ri) += g * probs.row(ri);
                                     gl(ri, tv[r]) -= g;
                                 }
                             });
}

Var sum_scalars(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("sum_scalars of nothing");
    Mat out = Mat::Zero(1, 1);
    std::vector<int> ids;
    for (const auto& p : parts) {
        if (p.rows() != 1 || p.cols() != 1) throw ShapeError("sum_scalars: parts must be 1x1");
        out(0, 0) += p.value()(0, 0);
        ids.push_back(p.id);
    }
    return parts[0].tape->push(std::move(out), ids, [ids](Tape& t, int self) {
        const double g = t.upstream(self)(0, 0);
        for (int id : ids)
            if (t.requires_grad(id)) t.grad_buffer(id)(0, 0) += g;
    });
}

}  // namespace listen::ag
