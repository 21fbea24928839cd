#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices of
// 64-bit floats. Every tensor is rank 2; scalars are (1,1) and vectors are
// (1,n) or (n,1). Shapes are explicit: there is no implicit broadcasting,
// mismatches throw ShapeError.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hiadv/common.hpp"
#include "hiadv/rng.hpp"

namespace hiadv {

struct Shape {
    int rows = 0;
    int cols = 0;
    bool operator==(const Shape&) const = default;
    int size() const { return rows * cols; }
    std::string str() const {
        return "(" + std::to_string(rows) + "," + std::to_string(cols) + ")";
    }
};

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until backward first touches it
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

// ---- matmul kernels; all accumulate into C ----
// Plain ikj loops: the inner j-loop runs over contiguous rows of B and C,
// which the compiler vectorizes well at these sizes.

// C(m,n) += A(m,k) * B(k,n)
inline void mm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * k;
        double* c = C + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C(k,n) += A(m,k)^T * B(m,n)
inline void mm_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * k;
        const double* b = B + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C(m,k) += A(m,n) * B(k,n)^T. B is transposed into thread-local scratch so
// the accumulation runs through the fast ikj path.
inline void mm_nt(const double* A, const double* B, double* C, int m, int n, int k) {
    thread_local std::vector<double> scratch;
    scratch.resize(static_cast<std::size_t>(n) * k);
    for (int j = 0; j < k; ++j)
        for (int t = 0; t < n; ++t)
            scratch[static_cast<std::size_t>(t) * k + j] = B[static_cast<std::size_t>(j) * n + t];
    mm_nn(A, scratch.data(), C, m, n, k);
}

} // namespace detail

class Tape;

namespace detail {
inline Tape*& active_tape_slot() {
    thread_local Tape* t = nullptr;
    return t;
}
} // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        Tensor t;
        t.d_ = std::make_shared<detail::TensorData>();
        t.d_->shape = {rows, cols};
        t.d_->values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
        t.d_->requires_grad = requires_grad;
        return t;
    }

    static Tensor constant(int rows, int cols, double v) {
        Tensor t = zeros(rows, cols);
        std::fill(t.d_->values.begin(), t.d_->values.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return constant(1, 1, v); }

    static Tensor from(int rows, int cols, std::vector<double> values,
                       bool requires_grad = false) {
        if (static_cast<std::size_t>(rows) * cols != values.size())
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + Shape{rows, cols}.str());
        Tensor t;
        t.d_ = std::make_shared<detail::TensorData>();
        t.d_->shape = {rows, cols};
        t.d_->values = std::move(values);
        t.d_->requires_grad = requires_grad;
        return t;
    }

    // Gaussian-initialized trainable parameter.
    static Tensor randn(int rows, int cols, Rng& rng, double stddev,
                        bool requires_grad = true) {
        Tensor t = zeros(rows, cols, requires_grad);
        for (auto& v : t.d_->values) v = rng.gaussian(0.0, stddev);
        return t;
    }

    bool defined() const { return static_cast<bool>(d_); }
    Shape shape() const { return d_->shape; }
    int rows() const { return d_->shape.rows; }
    int cols() const { return d_->shape.cols; }
    int size() const { return d_->shape.size(); }

    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    double at(int r, int c) const { return d_->values[static_cast<std::size_t>(r) * cols() + c]; }

    double item() const {
        if (size() != 1) throw ValueError("item: tensor " + shape().str() + " is not scalar");
        return d_->values[0];
    }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool b) { d_->requires_grad = b; }

    bool has_grad() const { return !d_->grad.empty(); }
    const std::vector<double>& grad() const { return d_->grad; }
    std::vector<double>& grad() { return d_->grad; }
    void ensure_grad() { d_->ensure_grad(); }
    void zero_grad() { std::fill(d_->grad.begin(), d_->grad.end(), 0.0); }

    // Value-equal copy severed from any tape.
    Tensor detach() const {
        Tensor t;
        t.d_ = std::make_shared<detail::TensorData>();
        t.d_->shape = d_->shape;
        t.d_->values = d_->values;
        t.d_->requires_grad = false;
        return t;
    }

    bool same_data(const Tensor& o) const { return d_ == o.d_; }

    std::shared_ptr<detail::TensorData> ptr() const { return d_; }

private:
    std::shared_ptr<detail::TensorData> d_;
};

inline Tensor detach(const Tensor& t) { return t.detach(); }

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    void record(const char* op, std::vector<Tensor> inputs, const Tensor& output,
                std::function<void()> pull) {
        Node n;
        n.op = op;
        n.inputs.reserve(inputs.size());
        for (auto& t : inputs) n.inputs.push_back(t.ptr());
        n.output = output.ptr();
        n.pull = std::move(pull);
        nodes_.push_back(std::move(n));
    }

    // Accumulates d(loss)/d(t) into t.grad for every reachable tensor that
    // requires grad. Unreachable tensors are left untouched.
    void backward(const Tensor& loss) {
        if (consumed_)
            throw ValueError("backward: tape already consumed; reset() it first");
        if (loss.size() != 1)
            throw ValueError("backward: loss has shape " + loss.shape().str() +
                             ", expected a scalar");
        consumed_ = true;
        loss.ptr()->ensure_grad();
        loss.ptr()->grad[0] += 1.0;
        std::unordered_set<detail::TensorData*> reach;
        reach.insert(loss.ptr().get());
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!reach.count(it->output.get())) continue;
            it->output->ensure_grad();
            for (auto& in : it->inputs) {
                if (in->requires_grad) in->ensure_grad();
                reach.insert(in.get());
            }
            it->pull();
        }
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        const char* op;
        std::vector<std::shared_ptr<detail::TensorData>> inputs;
        std::shared_ptr<detail::TensorData> output;
        std::function<void()> pull;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Activates a tape for the current thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& t) : prev_(detail::active_tape_slot()) {
        detail::active_tape_slot() = &t;
    }
    ~TapeScope() { detail::active_tape_slot() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

inline Tape* active_tape() { return detail::active_tape_slot(); }

namespace detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (auto* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

// Marks the output differentiable and records the node when a tape is active
// and some input requires grad. Without an active tape ops are pure math.
inline void record(const char* op, std::initializer_list<const Tensor*> ins, Tensor& out,
                   std::function<void()> pull) {
    Tape* tape = active_tape_slot();
    if (!tape || !any_requires_grad(ins)) return;
    out.set_requires_grad(true);
    std::vector<Tensor> inputs;
    inputs.reserve(ins.size());
    for (auto* t : ins) inputs.push_back(*t);
    tape->record(op, std::move(inputs), out, std::move(pull));
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + a.shape().str() + " and " +
                         b.shape().str() + " differ");
}

} // namespace detail

// ---- forward ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + a.shape().str() + " x " + b.shape().str());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros(m, n);
    detail::mm_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n);
    detail::record("matmul", {&a, &b}, out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), m, k, n] {
        if (ad->requires_grad)
            detail::mm_nt(od->grad.data(), bd->values.data(), ad->grad.data(), m, n, k);
        if (bd->requires_grad)
            detail::mm_tn(ad->values.data(), od->grad.data(), bd->grad.data(), m, k, n);
    });
    return out;
}

inline Tensor transpose(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros(n, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.values()[static_cast<std::size_t>(j) * m + i] =
                a.values()[static_cast<std::size_t>(i) * n + j];
    detail::record("transpose", {&a}, out, [ad = a.ptr(), od = out.ptr(), m, n] {
        if (!ad->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ad->grad[static_cast<std::size_t>(i) * n + j] +=
                    od->grad[static_cast<std::size_t>(j) * m + i];
    });
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
    detail::record("add", {&a, &b}, out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), n] {
        if (ad->requires_grad)
            for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
        if (bd->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i];
    });
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
    detail::record("sub", {&a, &b}, out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), n] {
        if (ad->requires_grad)
            for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
        if (bd->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bd->grad[i] -= od->grad[i];
    });
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("mul", a, b);
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    detail::record("mul", {&a, &b}, out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), n] {
        if (ad->requires_grad)
            for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * bd->values[i];
        if (bd->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i] * ad->values[i];
    });
    return out;
}

// out[i][j] = a[i][j] + r[0][j]; the explicit-shape form of a bias add.
inline Tensor add_rowvec(const Tensor& a, const Tensor& r) {
    if (r.rows() != 1 || r.cols() != a.cols())
        throw ShapeError("add_rowvec: " + a.shape().str() + " + " + r.shape().str());
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.values()[static_cast<std::size_t>(i) * n + j] =
                a.values()[static_cast<std::size_t>(i) * n + j] + r.values()[static_cast<std::size_t>(j)];
    detail::record("add_rowvec", {&a, &r}, out, [ad = a.ptr(), rd = r.ptr(), od = out.ptr(), m, n] {
        if (ad->requires_grad)
            for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i)
                ad->grad[i] += od->grad[i];
        if (rd->requires_grad)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    rd->grad[static_cast<std::size_t>(j)] +=
                        od->grad[static_cast<std::size_t>(i) * n + j];
    });
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * s;
    detail::record("scale", {&a}, out, [ad = a.ptr(), od = out.ptr(), n, s] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * s;
    });
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    detail::record("relu", {&a}, out, [ad = a.ptr(), od = out.ptr(), n] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i)
            if (ad->values[i] > 0.0) ad->grad[i] += od->grad[i];
    });
    return out;
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i)
        out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : slope * a.values()[i];
    detail::record("leaky_relu", {&a}, out, [ad = a.ptr(), od = out.ptr(), n, slope] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i)
            ad->grad[i] += od->grad[i] * (ad->values[i] > 0.0 ? 1.0 : slope);
    });
    return out;
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = sigmoid_scalar(a.values()[i]);
    detail::record("sigmoid", {&a}, out, [ad = a.ptr(), od = out.ptr(), n] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = od->values[i];
            ad->grad[i] += od->grad[i] * y * (1.0 - y);
        }
    });
    return out;
}

inline Tensor tanh(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = std::tanh(a.values()[i]);
    detail::record("tanh", {&a}, out, [ad = a.ptr(), od = out.ptr(), n] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = od->values[i];
            ad->grad[i] += od->grad[i] * (1.0 - y * y);
        }
    });
    return out;
}

inline Tensor exp(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = std::exp(a.values()[i]);
    detail::record("exp", {&a}, out, [ad = a.ptr(), od = out.ptr(), n] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * od->values[i];
    });
    return out;
}

inline Tensor log(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i) {
        if (a.values()[i] <= 0.0)
            throw ValueError("log: non-positive input " + std::to_string(a.values()[i]));
        out.values()[i] = std::log(a.values()[i]);
    }
    detail::record("log", {&a}, out, [ad = a.ptr(), od = out.ptr(), n] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] / ad->values[i];
    });
    return out;
}

// axis: 0 pools rows into (1,n), 1 pools cols into (m,1), -1 pools all into (1,1).
constexpr int kAll = -1;

namespace detail {
inline void check_axis(const char* op, int axis) {
    if (axis != 0 && axis != 1 && axis != kAll)
        throw ValueError(std::string(op) + ": axis must be 0, 1 or -1");
}
} // namespace detail

inline Tensor sum(const Tensor& a, int axis = kAll) {
    detail::check_axis("sum", axis);
    const int m = a.rows(), n = a.cols();
    Tensor out = axis == 0 ? Tensor::zeros(1, n) : axis == 1 ? Tensor::zeros(m, 1) : Tensor::zeros(1, 1);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = a.values()[static_cast<std::size_t>(i) * n + j];
            if (axis == 0) out.values()[static_cast<std::size_t>(j)] += v;
            else if (axis == 1) out.values()[static_cast<std::size_t>(i)] += v;
            else out.values()[0] += v;
        }
    detail::record("sum", {&a}, out, [ad = a.ptr(), od = out.ptr(), m, n, axis] {
        if (!ad->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double g = axis == 0 ? od->grad[static_cast<std::size_t>(j)]
                              : axis == 1 ? od->grad[static_cast<std::size_t>(i)]
                                          : od->grad[0];
                ad->grad[static_cast<std::size_t>(i) * n + j] += g;
            }
    });
    return out;
}

inline Tensor mean(const Tensor& a, int axis = kAll) {
    detail::check_axis("mean", axis);
    const int m = a.rows(), n = a.cols();
    const double inv = axis == 0 ? 1.0 / m : axis == 1 ? 1.0 / n : 1.0 / (static_cast<double>(m) * n);
    Tensor out = sum(a, axis); // records its own node; scale below records another
    return scale(out, inv);
}

inline Tensor logsumexp(const Tensor& a, int axis = kAll) {
    detail::check_axis("logsumexp", axis);
    const int m = a.rows(), n = a.cols();
    Tensor out = axis == 0 ? Tensor::zeros(1, n) : axis == 1 ? Tensor::zeros(m, 1) : Tensor::zeros(1, 1);
    auto lse = [](const double* x, std::size_t count, std::size_t stride) {
        double mx = x[0];
        for (std::size_t i = 1; i < count; ++i) mx = std::max(mx, x[i * stride]);
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) s += std::exp(x[i * stride] - mx);
        return mx + std::log(s);
    };
    const double* v = a.values().data();
    if (axis == 0)
        for (int j = 0; j < n; ++j)
            out.values()[static_cast<std::size_t>(j)] =
                lse(v + j, static_cast<std::size_t>(m), static_cast<std::size_t>(n));
    else if (axis == 1)
        for (int i = 0; i < m; ++i)
            out.values()[static_cast<std::size_t>(i)] =
                lse(v + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n), 1);
    else
        out.values()[0] = lse(v, static_cast<std::size_t>(m) * n, 1);
    detail::record("logsumexp", {&a}, out, [ad = a.ptr(), od = out.ptr(), m, n, axis] {
        if (!ad->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const std::size_t oi = axis == 0 ? static_cast<std::size_t>(j)
                                    : axis == 1 ? static_cast<std::size_t>(i)
                                                : 0;
                const std::size_t ai = static_cast<std::size_t>(i) * n + j;
                ad->grad[ai] += od->grad[oi] * std::exp(ad->values[ai] - od->values[oi]);
            }
    });
    return out;
}

inline Tensor softmax(const Tensor& a, int axis) {
    if (axis != 0 && axis != 1) throw ValueError("softmax: axis must be 0 or 1");
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros(m, n);
    auto run = [&](int count, int groups, auto index) {
        for (int g = 0; g < groups; ++g) {
            double mx = a.values()[index(g, 0)];
            for (int i = 1; i < count; ++i) mx = std::max(mx, a.values()[index(g, i)]);
            double s = 0.0;
            for (int i = 0; i < count; ++i) {
                const double e = std::exp(a.values()[index(g, i)] - mx);
                out.values()[index(g, i)] = e;
                s += e;
            }
            for (int i = 0; i < count; ++i) out.values()[index(g, i)] /= s;
        }
    };
    if (axis == 1)
        run(n, m, [n](int g, int i) { return static_cast<std::size_t>(g) * n + i; });
    else
        run(m, n, [n](int g, int i) { return static_cast<std::size_t>(i) * n + g; });
    detail::record("softmax", {&a}, out, [ad = a.ptr(), od = out.ptr(), m, n, axis] {
        if (!ad->requires_grad) return;
        auto run_b = [&](int count, int groups, auto index) {
            for (int g = 0; g < groups; ++g) {
                double dot = 0.0;
                for (int i = 0; i < count; ++i) dot += od->grad[index(g, i)] * od->values[index(g, i)];
                for (int i = 0; i < count; ++i)
                    ad->grad[index(g, i)] += od->values[index(g, i)] * (od->grad[index(g, i)] - dot);
            }
        };
        if (axis == 1)
            run_b(n, m, [n](int g, int i) { return static_cast<std::size_t>(g) * n + i; });
        else
            run_b(m, n, [n](int g, int i) { return static_cast<std::size_t>(i) * n + g; });
    });
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ValueError("concat: empty input list");
    if (axis != 0 && axis != 1) throw ValueError("concat: axis must be 0 or 1");
    int rows = parts[0].rows(), cols = parts[0].cols();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        if (axis == 0) {
            if (parts[p].cols() != cols)
                throw ShapeError("concat: column mismatch " + parts[p].shape().str());
            rows += parts[p].rows();
        } else {
            if (parts[p].rows() != rows)
                throw ShapeError("concat: row mismatch " + parts[p].shape().str());
            cols += parts[p].cols();
        }
    }
    if (axis == 0) cols = parts[0].cols();
    else rows = parts[0].rows();
    Tensor out = Tensor::zeros(rows, cols);
    std::vector<std::shared_ptr<detail::TensorData>> srcs;
    srcs.reserve(parts.size());
    {
        int off = 0;
        for (const auto& p : parts) {
            srcs.push_back(p.ptr());
            if (axis == 0) {
                std::memcpy(out.values().data() + static_cast<std::size_t>(off) * cols,
                            p.values().data(), p.values().size() * sizeof(double));
                off += p.rows();
            } else {
                for (int i = 0; i < rows; ++i)
                    std::memcpy(out.values().data() + static_cast<std::size_t>(i) * cols + off,
                                p.values().data() + static_cast<std::size_t>(i) * p.cols(),
                                static_cast<std::size_t>(p.cols()) * sizeof(double));
                off += p.cols();
            }
        }
    }
    bool any_rg = false;
    for (const auto& p : parts) any_rg = any_rg || p.requires_grad();
    Tape* tape = active_tape();
    if (tape && any_rg) {
        out.set_requires_grad(true);
        tape->record("concat", parts, out, [srcs, od = out.ptr(), rows, cols, axis] {
            int off = 0;
            for (const auto& s : srcs) {
                const int pr = s->shape.rows, pc = s->shape.cols;
                if (s->requires_grad) {
                    if (axis == 0) {
                        for (std::size_t i = 0; i < s->values.size(); ++i)
                            s->grad[i] += od->grad[static_cast<std::size_t>(off) * cols + i];
                    } else {
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < pc; ++j)
                                s->grad[static_cast<std::size_t>(i) * pc + j] +=
                                    od->grad[static_cast<std::size_t>(i) * cols + off + j];
                    }
                }
                off += axis == 0 ? pr : pc;
            }
        });
    }
    return out;
}

inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices) {
    const int v = table.rows(), d = table.cols();
    Tensor out = Tensor::zeros(static_cast<int>(indices.size()), d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const int idx = indices[r];
        if (idx < 0 || idx >= v)
            throw ValueError("embedding_lookup: index " + std::to_string(idx) +
                             " outside table of " + std::to_string(v) + " rows");
        const double* src = table.values().data() + static_cast<std::size_t>(idx) * d;
        double* dst = out.values().data() + r * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    }
    detail::record("embedding_lookup", {&table}, out,
                   [td = table.ptr(), od = out.ptr(), indices, d] {
        if (!td->requires_grad) return;
        for (std::size_t r = 0; r < indices.size(); ++r)
            for (int j = 0; j < d; ++j)
                td->grad[static_cast<std::size_t>(indices[r]) * d + j] +=
                    od->grad[r * d + j];
    });
    return out;
}

inline Tensor take_row(const Tensor& a, int row) {
    if (row < 0 || row >= a.rows())
        throw ValueError("take_row: row " + std::to_string(row) + " outside " + a.shape().str());
    const int n = a.cols();
    Tensor out = Tensor::zeros(1, n);
    std::memcpy(out.values().data(), a.values().data() + static_cast<std::size_t>(row) * n,
                static_cast<std::size_t>(n) * sizeof(double));
    detail::record("take_row", {&a}, out, [ad = a.ptr(), od = out.ptr(), row, n] {
        if (!ad->requires_grad) return;
        for (int j = 0; j < n; ++j)
            ad->grad[static_cast<std::size_t>(row) * n + j] += od->grad[static_cast<std::size_t>(j)];
    });
    return out;
}

// Copy of `a` with row `row` replaced by the (1,cols) tensor `r`.
inline Tensor replace_row(const Tensor& a, int row, const Tensor& r) {
    if (row < 0 || row >= a.rows())
        throw ValueError("replace_row: row " + std::to_string(row) + " outside " + a.shape().str());
    if (r.rows() != 1 || r.cols() != a.cols())
        throw ShapeError("replace_row: " + r.shape().str() + " into " + a.shape().str());
    const int n = a.cols();
    Tensor out = Tensor::zeros(a.rows(), n);
    out.values() = a.values();
    std::memcpy(out.values().data() + static_cast<std::size_t>(row) * n, r.values().data(),
                static_cast<std::size_t>(n) * sizeof(double));
    detail::record("replace_row", {&a, &r}, out,
                   [ad = a.ptr(), rd = r.ptr(), od = out.ptr(), row, n] {
        if (ad->requires_grad) {
            const int m = ad->shape.rows;
            for (int i = 0; i < m; ++i) {
                if (i == row) continue;
                for (int j = 0; j < n; ++j)
                    ad->grad[static_cast<std::size_t>(i) * n + j] +=
                        od->grad[static_cast<std::size_t>(i) * n + j];
            }
        }
        if (rd->requires_grad)
            for (int j = 0; j < n; ++j)
                rd->grad[static_cast<std::size_t>(j)] += od->grad[static_cast<std::size_t>(row) * n + j];
    });
    return out;
}

// Gradient passes only through entries strictly inside (lo, hi).
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const std::size_t n = a.values().size();
    for (std::size_t i = 0; i < n; ++i)
        out.values()[i] = std::min(hi, std::max(lo, a.values()[i]));
    detail::record("clamp", {&a}, out, [ad = a.ptr(), od = out.ptr(), n, lo, hi] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i)
            if (ad->values[i] > lo && ad->values[i] < hi) ad->grad[i] += od->grad[i];
    });
    return out;
}

inline Tensor reshape(const Tensor& a, int rows, int cols) {
    if (rows * cols != a.size())
        throw ShapeError("reshape: " + a.shape().str() + " to " + Shape{rows, cols}.str());
    Tensor out = Tensor::zeros(rows, cols);
    out.values() = a.values();
    detail::record("reshape", {&a}, out, [ad = a.ptr(), od = out.ptr()] {
        if (!ad->requires_grad) return;
        for (std::size_t i = 0; i < ad->grad.size(); ++i) ad->grad[i] += od->grad[i];
    });
    return out;
}

} // namespace hiadv
