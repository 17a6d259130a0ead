#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ivlm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until backward touches this tensor
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};
}  // namespace detail

// Dense row-major f64 tensor with shared-value semantics. Copying a Tensor
// copies the handle; the underlying buffer is shared so that a recorded
// computation graph and the caller observe the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->value.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

    std::span<double> data() { return impl_->value; }
    std::span<const double> data() const { return impl_->value; }
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<double> grad() { impl_->ensure_grad(); return impl_->grad; }
    std::span<const double> grad_view() const { return impl_->grad; }
    void zero_grad() { if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    double item() const;                       // scalar tensors only
    double at(std::size_t r, std::size_t c) const;  // rank-2 convenience

    detail::TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
    friend class Tape;
};

// Reverse-mode tape. Operations record a backward closure per node; backward()
// walks the nodes once in reverse topological order (which is recording
// order). A tape built with recording=false computes values only, for
// inference paths that never differentiate.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // elementwise / shape ops
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor add_bias(const Tensor& x, const Tensor& bias);  // [m,n] + [n], row broadcast
    Tensor transpose(const Tensor& a);                     // rank-2
    Tensor concat_rows(const std::vector<Tensor>& parts);  // rank-2, equal column counts
    Tensor sum(const Tensor& a);                           // -> scalar

    // dense algebra / nonlinearities
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor softmax(const Tensor& a, std::size_t axis);
    Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
    Tensor gelu(const Tensor& a);

    // gather rows of `table` by index; backward scatter-adds
    Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

    // fused multi-head attention: q [Lq,d], k/v [Lk,d], d divisible by heads.
    // causal=true requires Lq == Lk and masks keys with index > query index.
    Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     std::size_t heads, bool causal);

    // mean over rows of -log softmax(logits)[target], weighted per row and
    // normalized by the weight sum. Rows with weight 0 are skipped entirely
    // (their target id may be negative).
    Tensor weighted_nll(const Tensor& logits, const std::vector<int>& targets,
                        const std::vector<double>& weights);

    void backward(const Tensor& loss);
    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }
    bool recording() const { return recording_; }

private:
    struct Node {
        std::shared_ptr<detail::TensorImpl> output;
        std::function<void()> backward_fn;
    };

    Tensor make_output(Shape shape, bool requires_grad);
    void record(const Tensor& out, std::function<void()> fn);

    std::vector<Node> nodes_;
    bool recording_;
};

}  // namespace ivlm
