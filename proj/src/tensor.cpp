#include "gencal/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace gencal {

namespace {

thread_local bool t_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const char* what) {
    throw ShapeError(std::string(op) + ": " + what + ", got " + shape_str(a));
}

// Builds an output node. Parents are recorded only when grad mode is on and
// at least one of them requires grad.
Tensor make_node(const char* op, Shape shape, std::vector<double> data,
                 std::vector<TensorImplPtr> parents,
                 std::function<void(TensorImpl&)> backward_fn) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->op = op;
    bool needs = false;
    if (t_grad_enabled) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    if (needs) {
        impl->requires_grad = true;
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(impl));
}

std::size_t rows_of(const Shape& s) { return s.size() == 2 ? s[0] : 1; }
std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require_2d(const char* op, const Tensor& a) {
    if (a.dim() != 2) shape_fail(op, a.shape(), "expected a 2-D tensor");
}

enum class Broadcast { same, rows, scalar };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (b.numel() == 1 && b.dim() <= 1) return Broadcast::scalar;
    if (b.numel() == 1 && b.dim() == 2 && b.shape()[0] == 1 && b.shape()[1] == 1) {
        return Broadcast::scalar;
    }
    const bool b_row = (b.dim() == 1) || (b.dim() == 2 && b.shape()[0] == 1);
    if (a.dim() == 2 && b_row && cols_of(b.shape()) == a.shape()[1]) return Broadcast::rows;
    shape_fail(op, a.shape(), b.shape());
}

std::size_t b_index(Broadcast mode, std::size_t i, std::size_t cols) {
    switch (mode) {
        case Broadcast::same: return i;
        case Broadcast::rows: return i % cols;
        case Broadcast::scalar: return 0;
    }
    return 0;
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    const Broadcast mode = classify(op, a, b);
    const std::size_t n = a.numel();
    const std::size_t cols = cols_of(a.shape());
    std::vector<double> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[b_index(mode, i, cols)]);
    return make_node(op, a.shape(), std::move(out), {a.impl(), b.impl()},
                     [mode, cols, da, db](TensorImpl& self) {
                         TensorImpl& pa = *self.parents[0];
                         TensorImpl& pb = *self.parents[1];
                         const std::size_t n = self.numel();
                         if (pa.requires_grad) {
                             pa.ensure_grad();
                             for (std::size_t i = 0; i < n; ++i) {
                                 const std::size_t j = b_index(mode, i, cols);
                                 pa.grad[i] += self.grad[i] * da(pa.data[i], pb.data[j]);
                             }
                         }
                         if (pb.requires_grad) {
                             pb.ensure_grad();
                             for (std::size_t i = 0; i < n; ++i) {
                                 const std::size_t j = b_index(mode, i, cols);
                                 pb.grad[j] += self.grad[i] * db(pa.data[i], pb.data[j]);
                             }
                         }
                     });
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const auto ad = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i]);
    return make_node(op, a.shape(), std::move(out), {a.impl()}, [deriv](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.numel(); ++i) {
            pa.grad[i] += self.grad[i] * deriv(pa.data[i], self.data[i]);
        }
    });
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void TensorImpl::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor::Tensor() : Tensor(Tensor::scalar(0.0)) {}

Tensor::Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape.size() > 2) shape_fail("tensor", shape, "at most 2 dimensions supported");
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }

double Tensor::item() const {
    if (numel() != 1) shape_fail("item", shape(), "expected a single element");
    return impl_->data[0];
}

void Tensor::set_requires_grad(bool value) {
    if (!impl_->is_leaf()) throw std::logic_error("set_requires_grad: only leaves can be toggled");
    impl_->requires_grad = value;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data, false); }

Tensor Tensor::clone() const { return from_data(shape(), impl_->data, requires_grad()); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Graph Graph::trace(const Tensor& root) {
    Graph g;
    std::unordered_set<TensorImpl*> visited;
    // Iterative post-order DFS: (node, next parent index).
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root.impl().get(), 0);
    visited.insert(root.impl().get());
    g.keep_alive_.push_back(root.impl());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* parent = node->parents[next].get();
            const TensorImplPtr& parent_ptr = node->parents[next];
            ++next;
            if (visited.insert(parent).second) {
                g.keep_alive_.push_back(parent_ptr);
                stack.emplace_back(parent, 0);
            }
        } else {
            g.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return g;
}

void Graph::clear() {
    for (TensorImpl* node : nodes_) {
        node->parents.clear();
        node->backward_fn = nullptr;
    }
    nodes_.clear();
    keep_alive_.clear();
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    Graph g = Graph::trace(loss);
    for (TensorImpl* node : g.nodes()) {
        if (!node->requires_grad) continue;
        if (node->is_leaf()) {
            node->ensure_grad();
        } else {
            node->grad.assign(node->numel(), 0.0);
        }
    }
    loss.impl()->grad[0] += 1.0;
    const auto& nodes = g.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
        shape_fail("matmul", a.shape(), b.shape());
    }
    const auto m = static_cast<Eigen::Index>(a.shape()[0]);
    const auto k = static_cast<Eigen::Index>(a.shape()[1]);
    const auto n = static_cast<Eigen::Index>(b.shape()[1]);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    {
        ConstMap am(a.data().data(), m, k);
        ConstMap bm(b.data().data(), k, n);
        MutMap cm(out.data(), m, n);
        cm.noalias() = am * bm;
    }
    return make_node("matmul", {a.shape()[0], b.shape()[1]}, std::move(out), {a.impl(), b.impl()},
                     [m, k, n](TensorImpl& self) {
                         TensorImpl& pa = *self.parents[0];
                         TensorImpl& pb = *self.parents[1];
                         ConstMap dc(self.grad.data(), m, n);
                         if (pa.requires_grad) {
                             pa.ensure_grad();
                             MutMap da(pa.grad.data(), m, k);
                             da.noalias() += dc * ConstMap(pb.data.data(), k, n).transpose();
                         }
                         if (pb.requires_grad) {
                             pb.ensure_grad();
                             MutMap db(pb.grad.data(), k, n);
                             db.noalias() += ConstMap(pa.data.data(), m, k).transpose() * dc;
                         }
                     });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor pow(const Tensor& a, double exponent) {
    if (exponent == 2.0) {
        return unary(
            "pow", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
    }
    return unary(
        "pow", a, [exponent](double x) { return std::pow(x, exponent); },
        [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x < 0.0 ? 0.0 : x; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        "scale", a, [factor](double x) { return x * factor; },
        [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(
        "add_scalar", a, [value](double x) { return x + value; },
        [](double, double) { return 1.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        "clamp_min", a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    return make_node("sum", {}, {total}, {a.impl()}, [](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        pa.ensure_grad();
        const double g = self.grad[0];
        for (double& v : pa.grad) v += g;
    });
}

Tensor sum(const Tensor& a, std::size_t axis) {
    require_2d("sum", a);
    if (axis > 1) throw ShapeError("sum: axis must be 0 or 1, got " + std::to_string(axis));
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto ad = a.data();
    if (axis == 0) {
        std::vector<double> out(n, 0.0);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) out[c] += ad[r * n + c];
        return make_node("sum", {1, n}, std::move(out), {a.impl()}, [m, n](TensorImpl& self) {
            TensorImpl& pa = *self.parents[0];
            pa.ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) pa.grad[r * n + c] += self.grad[c];
        });
    }
    std::vector<double> out(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += ad[r * n + c];
        out[r] = acc;
    }
    return make_node("sum", {m, 1}, std::move(out), {a.impl()}, [m, n](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) pa.grad[r * n + c] += self.grad[r];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax_rows(const Tensor& a) {
    require_2d("softmax_rows", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto ad = a.data();
    std::vector<double> out(m * n);
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = ad.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            o[c] = std::exp(row[c] - mx);
            z += o[c];
        }
        for (std::size_t c = 0; c < n; ++c) o[c] /= z;
    }
    return make_node("softmax_rows", a.shape(), std::move(out), {a.impl()},
                     [m, n](TensorImpl& self) {
                         TensorImpl& pa = *self.parents[0];
                         pa.ensure_grad();
                         for (std::size_t r = 0; r < m; ++r) {
                             const double* y = self.data.data() + r * n;
                             const double* dy = self.grad.data() + r * n;
                             double dot = 0.0;
                             for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
                             for (std::size_t c = 0; c < n; ++c)
                                 pa.grad[r * n + c] += y[c] * (dy[c] - dot);
                         }
                     });
}

Tensor l2_normalize_rows(const Tensor& a) {
    require_2d("l2_normalize_rows", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto ad = a.data();
    std::vector<double> out(m * n);
    std::vector<double> norms(m);
    for (std::size_t r = 0; r < m; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < n; ++c) ss += ad[r * n + c] * ad[r * n + c];
        const double norm = std::sqrt(ss);
        if (norm == 0.0) {
            throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) +
                                    " has zero norm");
        }
        norms[r] = norm;
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = ad[r * n + c] / norm;
    }
    return make_node("l2_normalize_rows", a.shape(), std::move(out), {a.impl()},
                     [m, n, norms = std::move(norms)](TensorImpl& self) {
                         TensorImpl& pa = *self.parents[0];
                         pa.ensure_grad();
                         for (std::size_t r = 0; r < m; ++r) {
                             const double* y = self.data.data() + r * n;
                             const double* dy = self.grad.data() + r * n;
                             double dot = 0.0;
                             for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
                             for (std::size_t c = 0; c < n; ++c)
                                 pa.grad[r * n + c] += (dy[c] - y[c] * dot) / norms[r];
                         }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    std::vector<TensorImplPtr> parents;
    for (const auto& p : parts) {
        require_2d("concat_rows", p);
        if (p.cols() != n) shape_fail("concat_rows", parts[0].shape(), p.shape());
        m += p.rows();
        parents.push_back(p.impl());
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_node("concat_rows", {m, n}, std::move(out), std::move(parents),
                     [](TensorImpl& self) {
                         std::size_t offset = 0;
                         for (auto& p : self.parents) {
                             const std::size_t len = p->numel();
                             if (p->requires_grad) {
                                 p->ensure_grad();
                                 for (std::size_t i = 0; i < len; ++i)
                                     p->grad[i] += self.grad[offset + i];
                             }
                             offset += len;
                         }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    std::vector<TensorImplPtr> parents;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        require_2d("concat_cols", p);
        if (p.rows() != m) shape_fail("concat_cols", parts[0].shape(), p.shape());
        n += p.cols();
        widths.push_back(p.cols());
        parents.push_back(p.impl());
    }
    std::vector<double> out(m * n);
    std::size_t col0 = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        const auto pd = p.data();
        for (std::size_t r = 0; r < m; ++r)
            std::copy_n(pd.data() + r * w, w, out.data() + r * n + col0);
        col0 += w;
    }
    return make_node("concat_cols", {m, n}, std::move(out), std::move(parents),
                     [m, n, widths = std::move(widths)](TensorImpl& self) {
                         std::size_t c0 = 0;
                         for (std::size_t k = 0; k < self.parents.size(); ++k) {
                             TensorImpl& p = *self.parents[k];
                             const std::size_t w = widths[k];
                             if (p.requires_grad) {
                                 p.ensure_grad();
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < w; ++c)
                                         p.grad[r * w + c] += self.grad[r * n + c0 + c];
                             }
                             c0 += w;
                         }
                     });
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> rows) {
    require_2d("index_select", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * n);
    const auto ad = a.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m) {
            throw std::out_of_range("index_select: row " + std::to_string(idx[r]) +
                                    " out of range for shape " + shape_str(a.shape()));
        }
        std::copy_n(ad.data() + idx[r] * n, n, out.data() + r * n);
    }
    const std::size_t out_rows = idx.size();
    return make_node("index_select", {out_rows, n}, std::move(out), {a.impl()},
                     [n, idx = std::move(idx)](TensorImpl& self) {
                         TensorImpl& pa = *self.parents[0];
                         pa.ensure_grad();
                         for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < n; ++c)
                                 pa.grad[idx[r] * n + c] += self.grad[r * n + c];
                     });
}

Tensor transpose(const Tensor& a) {
    require_2d("transpose", a);
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<double> out(m * n);
    const auto ad = a.data();
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out[c * m + r] = ad[r * n + c];
    return make_node("transpose", {n, m}, std::move(out), {a.impl()}, [m, n](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) pa.grad[r * n + c] += self.grad[c * m + r];
    });
}

// ---------------------------------------------------------------------------

namespace {

double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

double checked_value(const Tensor& y, const char* where, std::size_t coord) {
    const double v = y.item();
    if (!std::isfinite(v)) {
        throw std::runtime_error(std::string("finite_diff_check: non-finite value ") + where +
                                 " at coordinate " + std::to_string(coord));
    }
    return v;
}

}  // namespace

double finite_diff_check(const TensorFn& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    Tensor leaf = Tensor::from_data(x.shape(), std::vector<double>(x.data().begin(), x.data().end()),
                                    true);
    Tensor y = f(leaf);
    checked_value(y, "at base point", 0);
    backward(y);
    std::vector<double> analytic(x.numel(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    NoGradGuard no_grad;
    double worst = 0.0;
    std::vector<double> probe(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double x0 = probe[i];
        probe[i] = x0 + h;
        const double fp = checked_value(f(Tensor::from_data(x.shape(), probe)), "(+h)", i);
        probe[i] = x0 - h;
        const double fm = checked_value(f(Tensor::from_data(x.shape(), probe)), "(-h)", i);
        probe[i] = x0;
        worst = std::max(worst, rel_error(analytic[i], (fp - fm) / (2.0 * h)));
    }
    return worst;
}

GradCheckResult finite_diff_check_params(const std::function<Tensor()>& f,
                                         std::span<Tensor> params, double h,
                                         std::size_t max_coords, unsigned long long seed) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    for (auto& p : params) p.zero_grad();
    Tensor y = f();
    checked_value(y, "at base point", 0);
    backward(y);

    std::mt19937_64 rng(seed);
    NoGradGuard no_grad;
    GradCheckResult result;
    for (auto& p : params) {
        std::vector<std::size_t> coords(p.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (max_coords != 0 && coords.size() > max_coords) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords);
        }
        const std::vector<double> analytic =
            p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                         : std::vector<double>(p.numel(), 0.0);
        auto values = p.mutable_data();
        for (std::size_t c : coords) {
            const double x0 = values[c];
            values[c] = x0 + h;
            const double fp = checked_value(f(), "(+h)", c);
            values[c] = x0 - h;
            const double fm = checked_value(f(), "(-h)", c);
            values[c] = x0;
            result.max_rel_error =
                std::max(result.max_rel_error, rel_error(analytic[c], (fp - fm) / (2.0 * h)));
            ++result.coords_checked;
        }
    }
    return result;
}

}  // namespace gencal
