#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gencal {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised by primitives whose operand shapes do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

/// Storage and graph bookkeeping behind a Tensor handle.
///
/// Leaves (parameters, inputs) have no parents. Interior nodes keep their
/// parents alive so that the recorded graph survives until the last handle
/// to the output is dropped or the graph is cleared.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first populated
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<TensorImplPtr> parents;
    // Propagates this node's grad into its parents' grads.
    std::function<void(TensorImpl& self)> backward_fn;

    bool is_leaf() const { return parents.empty(); }
    std::size_t numel() const { return data.size(); }
    void ensure_grad();
};

/// Dense row-major float64 array that can participate in reverse-mode
/// differentiation. Copying a Tensor copies the handle, not the values;
/// use clone() for a deep copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(TensorImplPtr impl);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return impl_->shape; }
    std::size_t dim() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    double item() const;
    double at(std::size_t i) const { return impl_->data[i]; }
    double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool value);
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    void zero_grad();

    /// Value copy with no graph history.
    Tensor detach() const;
    /// Value copy that keeps requires_grad (a fresh leaf).
    Tensor clone() const;

    const char* op() const { return impl_->op; }
    const TensorImplPtr& impl() const { return impl_; }

private:
    TensorImplPtr impl_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// The recorded operations reachable from a root, in topological order
/// (every node appears after all of its parents).
class Graph {
public:
    static Graph trace(const Tensor& root);

    const std::vector<TensorImpl*>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

    /// Drops parent links and backward rules of every interior node.
    /// Leaves, including parameters, are untouched.
    void clear();

private:
    std::vector<TensorImpl*> nodes_;
    std::vector<TensorImplPtr> keep_alive_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires
/// grad. Leaf grads accumulate across calls; interior grads are reset.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitives. Shapes are at most 2-D. Binary elementwise ops accept equal
// shapes, a row vector ([n] or [1,n]) broadcast over the rows of an [m,n]
// left operand, or a single-element right operand.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor sum(const Tensor& a);
/// Reduction along one axis of a 2-D tensor; the reduced axis is kept with size 1.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
/// Divides every row by its L2 norm. A zero-norm row is an error.
Tensor l2_normalize_rows(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor index_select(const Tensor& a, std::span<const std::size_t> rows);
Tensor transpose(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor clamp_min(const Tensor& a, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Finite-difference oracle.

using TensorFn = std::function<Tensor(const Tensor&)>;

/// Max over coordinates of |a - n| / max(|a|, |n|, 1e-6), a analytic and n the central difference,
/// for a scalar function of one tensor.
double finite_diff_check(const TensorFn& f, const Tensor& x, double h = 1e-5);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
};

/// Same measure over parameters perturbed in place. When max_coords is
/// nonzero, that many coordinates are sampled per parameter (seeded).
GradCheckResult finite_diff_check_params(const std::function<Tensor()>& f,
                                         std::span<Tensor> params, double h = 1e-5,
                                         std::size_t max_coords = 0,
                                         unsigned long long seed = 0);

}  // namespace gencal
