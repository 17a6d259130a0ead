#include "ivlm/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ivlm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

ConstMapMat map2d(const detail::TensorImpl* t) {
    return ConstMapMat(t->value.data(), static_cast<Eigen::Index>(t->shape[0]),
                       static_cast<Eigen::Index>(t->shape[1]));
}

MapMat map2d_grad(detail::TensorImpl* t) {
    t->ensure_grad();
    return MapMat(t->grad.data(), static_cast<Eigen::Index>(t->shape[0]),
                  static_cast<Eigen::Index>(t->shape[1]));
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got shape " +
                                    shape_str(t.shape()));
    }
}

constexpr double kGeluCoef = 0.044715;
constexpr double kSqrt2OverPi = 0.7978845608028654;

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->value.assign(shape_numel(impl->shape), v);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("item: tensor is not scalar, shape " + shape_str(shape()));
    }
    return impl_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return impl_->value[r * impl_->shape[1] + c];
}

Tensor Tape::make_output(Shape shape, bool requires_grad) {
    Tensor out = Tensor::zeros(std::move(shape));
    out.impl()->requires_grad = requires_grad;
    return out;
}

void Tape::record(const Tensor& out, std::function<void()> fn) {
    if (recording_ && out.requires_grad()) {
        nodes_.push_back(Node{out.impl_, std::move(fn)});
    }
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->output->grad.empty()) {
            it->backward_fn();
        }
    }
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out = make_output(a.shape(), recording_ && (a.requires_grad() || b.requires_grad()));
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    record(out, [ai = a.impl_, bi = b.impl_, oi = out.impl_] {
        const auto& g = oi->grad;
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i];
        }
    });
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out = make_output(a.shape(), recording_ && (a.requires_grad() || b.requires_grad()));
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    record(out, [ai = a.impl_, bi = b.impl_, oi = out.impl_] {
        const auto& g = oi->grad;
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i] -= g[i];
        }
    });
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out = make_output(a.shape(), recording_ && (a.requires_grad() || b.requires_grad()));
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    record(out, [ai = a.impl_, bi = b.impl_, oi = out.impl_] {
        const auto& g = oi->grad;
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i] * bi->value[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i] * ai->value[i];
        }
    });
    return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
    Tensor out = make_output(a.shape(), recording_ && a.requires_grad());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
    record(out, [ai = a.impl_, oi = out.impl_, c] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
    });
    return out;
}

Tensor Tape::add_bias(const Tensor& x, const Tensor& bias) {
    check_rank2(x, "add_bias");
    if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw std::invalid_argument("add_bias: bias shape " + shape_str(bias.shape()) +
                                    " does not match columns of " + shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor out = make_output(x.shape(), recording_ && (x.requires_grad() || bias.requires_grad()));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c)
            out.data()[r * n + c] = x.data()[r * n + c] + bias.data()[c];
    record(out, [xi = x.impl_, bi = bias.impl_, oi = out.impl_, m, n] {
        const auto& g = oi->grad;
        if (xi->requires_grad) {
            xi->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) xi->grad[i] += g[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) bi->grad[c] += g[r * n + c];
        }
    });
    return out;
}

Tensor Tape::transpose(const Tensor& a) {
    check_rank2(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out = make_output({n, m}, recording_ && a.requires_grad());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out.data()[c * m + r] = a.data()[r * n + c];
    record(out, [ai = a.impl_, oi = out.impl_, m, n] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) ai->grad[r * n + c] += oi->grad[c * m + r];
    });
    return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const std::size_t cols = parts[0].dim(1);
    std::size_t rows = 0;
    bool rg = false;
    for (const auto& p : parts) {
        check_rank2(p, "concat_rows");
        if (p.dim(1) != cols) {
            throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()) +
                                        " vs expected " + std::to_string(cols) + " columns");
        }
        rows += p.dim(0);
        rg = rg || p.requires_grad();
    }
    Tensor out = make_output({rows, cols}, recording_ && rg);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p.numel();
    }
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl_);
    record(out, [impls = std::move(impls), oi = out.impl_] {
        std::size_t off = 0;
        for (const auto& pi : impls) {
            const std::size_t n = pi->value.size();
            if (pi->requires_grad) {
                pi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) pi->grad[i] += oi->grad[off + i];
            }
            off += n;
        }
    });
    return out;
}

Tensor Tape::sum(const Tensor& a) {
    Tensor out = make_output({1}, recording_ && a.requires_grad());
    double s = 0.0;
    for (double v : a.data()) s += v;
    out.data()[0] = s;
    record(out, [ai = a.impl_, oi = out.impl_] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const double g = oi->grad[0];
        for (double& gv : ai->grad) gv += g;
    });
    return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " * " +
                                    shape_str(b.shape()));
    }
    Tensor out = make_output({a.dim(0), b.dim(1)}, recording_ && (a.requires_grad() || b.requires_grad()));
    MapMat(out.data().data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(b.dim(1))) =
        map2d(a.impl()) * map2d(b.impl());
    record(out, [ai = a.impl_, bi = b.impl_, oi = out.impl_] {
        ConstMapMat g(oi->grad.data(), static_cast<Eigen::Index>(oi->shape[0]),
                      static_cast<Eigen::Index>(oi->shape[1]));
        if (ai->requires_grad) {
            map2d_grad(ai.get()) += g * map2d(bi.get()).transpose();
        }
        if (bi->requires_grad) {
            map2d_grad(bi.get()) += map2d(ai.get()).transpose() * g;
        }
    });
    return out;
}

Tensor Tape::softmax(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                                    shape_str(a.shape()));
    }
    const auto& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];

    Tensor out = make_output(a.shape(), recording_ && a.requires_grad());
    auto x = a.data();
    auto y = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double e = std::exp(x[base + j * inner] - mx);
                y[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= z;
        }
    }
    record(out, [ai = a.impl_, oi = out.impl_, outer, inner, len] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const auto& p = oi->value;
        const auto& g = oi->grad;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * p[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t k = base + j * inner;
                    ai->grad[k] += p[k] * (g[k] - dot);
                }
            }
        }
    });
    return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank-0 input");
    const std::size_t n = x.shape().back();
    if (gamma.numel() != n || beta.numel() != n) {
        throw std::invalid_argument("layer_norm: gamma/beta length must match last axis (" + std::to_string(n) +
                                    "), got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    const std::size_t rows = x.numel() / n;
    Tensor out = make_output(x.shape(), recording_ && (x.requires_grad() || gamma.requires_grad() ||
                                                       beta.requires_grad()));
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xr[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xr[j] - mean) * inv;
            (*xhat)[r * n + j] = h;
            out.data()[r * n + j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    record(out, [xi = x.impl_, gi = gamma.impl_, bi = beta.impl_, oi = out.impl_, xhat, inv_std, rows, n] {
        const auto& g = oi->grad;
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) bi->grad[j] += g[r * n + j];
        }
        if (gi->requires_grad) {
            gi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) gi->grad[j] += g[r * n + j] * (*xhat)[r * n + j];
        }
        if (xi->requires_grad) {
            xi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_gd = 0.0, mean_gdh = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double gd = gi->value[j] * g[r * n + j];
                    mean_gd += gd;
                    mean_gdh += gd * (*xhat)[r * n + j];
                }
                mean_gd /= static_cast<double>(n);
                mean_gdh /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const double gd = gi->value[j] * g[r * n + j];
                    xi->grad[r * n + j] +=
                        (*inv_std)[r] * (gd - mean_gd - (*xhat)[r * n + j] * mean_gdh);
                }
            }
        }
    });
    return out;
}

Tensor Tape::gelu(const Tensor& a) {
    Tensor out = make_output(a.shape(), recording_ && a.requires_grad());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.data()[i];
        const double u = kSqrt2OverPi * (x + kGeluCoef * x * x * x);
        out.data()[i] = 0.5 * x * (1.0 + std::tanh(u));
    }
    record(out, [ai = a.impl_, oi = out.impl_] {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
            const double x = ai->value[i];
            const double u = kSqrt2OverPi * (x + kGeluCoef * x * x * x);
            const double t = std::tanh(u);
            const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoef * x * x);
            const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            ai->grad[i] += oi->grad[i] * d;
        }
    });
    return out;
}

Tensor Tape::embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    check_rank2(table, "embedding_rows");
    const std::size_t rows = table.dim(0), dim = table.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw std::invalid_argument("embedding_rows: id " + std::to_string(id) + " out of range [0, " +
                                        std::to_string(rows) + ")");
        }
    }
    Tensor out = make_output({ids.size(), dim}, recording_ && table.requires_grad());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const double* src = table.data().data() + static_cast<std::size_t>(ids[r]) * dim;
        std::copy(src, src + dim, out.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    record(out, [ti = table.impl_, oi = out.impl_, ids, dim] {
        if (!ti->requires_grad) return;
        ti->ensure_grad();
        for (std::size_t r = 0; r < ids.size(); ++r) {
            double* dst = ti->grad.data() + static_cast<std::size_t>(ids[r]) * dim;
            const double* src = oi->grad.data() + r * dim;
            for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
        }
    });
    return out;
}

Tensor Tape::attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       std::size_t heads, bool causal) {
    check_rank2(q, "attention");
    check_rank2(k, "attention");
    check_rank2(v, "attention");
    const std::size_t lq = q.dim(0), lk = k.dim(0), d = q.dim(1);
    if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != lk) {
        throw std::invalid_argument("attention: incompatible shapes q=" + shape_str(q.shape()) + " k=" +
                                    shape_str(k.shape()) + " v=" + shape_str(v.shape()));
    }
    if (heads == 0 || d % heads != 0) {
        throw std::invalid_argument("attention: dim " + std::to_string(d) + " not divisible by heads " +
                                    std::to_string(heads));
    }
    if (causal && lq != lk) {
        throw std::invalid_argument("attention: causal mask requires square attention, got " +
                                    std::to_string(lq) + " queries over " + std::to_string(lk) + " keys");
    }
    const std::size_t hd = d / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor out = make_output({lq, d}, recording_ && (q.requires_grad() || k.requires_grad() ||
                                                     v.requires_grad()));
    // per-head attention probabilities, kept for the backward pass
    auto probs = std::make_shared<std::vector<double>>(heads * lq * lk);
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
    for (std::size_t h = 0; h < heads; ++h) {
        ConstStridedMap qb(q.data().data() + h * hd, static_cast<Eigen::Index>(lq),
                           static_cast<Eigen::Index>(hd), stride);
        ConstStridedMap kb(k.data().data() + h * hd, static_cast<Eigen::Index>(lk),
                           static_cast<Eigen::Index>(hd), stride);
        ConstStridedMap vb(v.data().data() + h * hd, static_cast<Eigen::Index>(lk),
                           static_cast<Eigen::Index>(hd), stride);
        MapMat pb(probs->data() + h * lq * lk, static_cast<Eigen::Index>(lq),
                  static_cast<Eigen::Index>(lk));
        pb.noalias() = att_scale * (qb * kb.transpose());
        for (std::size_t r = 0; r < lq; ++r) {
            const std::size_t limit = causal ? r + 1 : lk;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < limit; ++c) mx = std::max(mx, pb(r, c));
            double z = 0.0;
            for (std::size_t c = 0; c < limit; ++c) {
                const double e = std::exp(pb(r, c) - mx);
                pb(r, c) = e;
                z += e;
            }
            for (std::size_t c = 0; c < limit; ++c) pb(r, c) /= z;
            for (std::size_t c = limit; c < lk; ++c) pb(r, c) = 0.0;
        }
        StridedMap ob(out.data().data() + h * hd, static_cast<Eigen::Index>(lq),
                      static_cast<Eigen::Index>(hd), stride);
        ob.noalias() = pb * vb;
    }

    record(out, [qi = q.impl_, ki = k.impl_, vi = v.impl_, oi = out.impl_, probs, heads, hd, lq, lk, d,
                 att_scale] {
        const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
        for (std::size_t h = 0; h < heads; ++h) {
            ConstStridedMap qb(qi->value.data() + h * hd, static_cast<Eigen::Index>(lq),
                               static_cast<Eigen::Index>(hd), stride);
            ConstStridedMap kb(ki->value.data() + h * hd, static_cast<Eigen::Index>(lk),
                               static_cast<Eigen::Index>(hd), stride);
            ConstStridedMap vb(vi->value.data() + h * hd, static_cast<Eigen::Index>(lk),
                               static_cast<Eigen::Index>(hd), stride);
            ConstMapMat pb(probs->data() + h * lq * lk, static_cast<Eigen::Index>(lq),
                           static_cast<Eigen::Index>(lk));
            ConstStridedMap gob(oi->grad.data() + h * hd, static_cast<Eigen::Index>(lq),
                                static_cast<Eigen::Index>(hd), stride);
            if (vi->requires_grad) {
                vi->ensure_grad();
                StridedMap gvb(vi->grad.data() + h * hd, static_cast<Eigen::Index>(lk),
                               static_cast<Eigen::Index>(hd), stride);
                gvb.noalias() += pb.transpose() * gob;
            }
            if (qi->requires_grad || ki->requires_grad) {
                RowMat dp = gob * vb.transpose();  // [lq, lk]
                RowMat ds(lq, lk);
                for (std::size_t r = 0; r < lq; ++r) {
                    const double rowdot = (dp.row(static_cast<Eigen::Index>(r)).array() *
                                           pb.row(static_cast<Eigen::Index>(r)).array())
                                              .sum();
                    ds.row(static_cast<Eigen::Index>(r)) =
                        pb.row(static_cast<Eigen::Index>(r)).array() *
                        (dp.row(static_cast<Eigen::Index>(r)).array() - rowdot);
                }
                if (qi->requires_grad) {
                    qi->ensure_grad();
                    StridedMap gqb(qi->grad.data() + h * hd, static_cast<Eigen::Index>(lq),
                                   static_cast<Eigen::Index>(hd), stride);
                    gqb.noalias() += att_scale * (ds * kb);
                }
                if (ki->requires_grad) {
                    ki->ensure_grad();
                    StridedMap gkb(ki->grad.data() + h * hd, static_cast<Eigen::Index>(lk),
                                   static_cast<Eigen::Index>(hd), stride);
                    gkb.noalias() += att_scale * (ds.transpose() * qb);
                }
            }
        }
    });
    return out;
}

Tensor Tape::weighted_nll(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<double>& weights) {
    check_rank2(logits, "weighted_nll");
    const std::size_t n = logits.dim(0), vocab = logits.dim(1);
    if (targets.size() != n || weights.size() != n) {
        throw std::invalid_argument("weighted_nll: logits " + shape_str(logits.shape()) + " need " +
                                    std::to_string(n) + " targets/weights, got " +
                                    std::to_string(targets.size()) + "/" + std::to_string(weights.size()));
    }
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] < 0.0) throw std::invalid_argument("weighted_nll: negative weight");
        if (weights[i] > 0.0) {
            if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
                throw std::invalid_argument("weighted_nll: target " + std::to_string(targets[i]) +
                                            " out of range at weighted row " + std::to_string(i));
            }
            wsum += weights[i];
        }
    }
    if (wsum == 0.0) {
        throw std::invalid_argument("weighted_nll: all loss weights are zero (degenerate sample)");
    }

    Tensor out = make_output({1}, recording_ && logits.requires_grad());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] == 0.0) continue;
        const double* row = logits.data().data() + i * vocab;
        double mx = row[0];
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        total += weights[i] * (lse - row[static_cast<std::size_t>(targets[i])]);
    }
    out.data()[0] = total / wsum;

    record(out, [li = logits.impl_, oi = out.impl_, targets, weights, wsum, n, vocab] {
        if (!li->requires_grad) return;
        li->ensure_grad();
        const double g = oi->grad[0];
        for (std::size_t i = 0; i < n; ++i) {
            if (weights[i] == 0.0) continue;
            const double* row = li->value.data() + i * vocab;
            double* grow = li->grad.data() + i * vocab;
            double mx = row[0];
            for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
            const double coef = g * weights[i] / wsum;
            for (std::size_t j = 0; j < vocab; ++j) {
                grow[j] += coef * (std::exp(row[j] - mx) / z);
            }
            grow[static_cast<std::size_t>(targets[i])] -= coef;
        }
    });
    return out;
}

}  // namespace ivlm
