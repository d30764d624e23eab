#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msent/error.hpp"
#include "msent/rng.hpp"

namespace msent::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != numel(shape))
            fail(ErrorKind::dimension_mismatch,
                 "tensor buffer of " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
    }

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    [[nodiscard]] std::size_t rank() const noexcept { return shape.size(); }
    [[nodiscard]] std::size_t last() const { return shape.back(); }
    [[nodiscard]] std::size_t rows() const { return shape.empty() ? 1 : size() / shape.back(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Trainable tensor; gradients accumulate across backward passes until zero_grad().
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape; }
};

class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        std::function<void(Tape&, std::size_t)> backward;
    };

    Var constant(Tensor value) { return push(std::move(value), nullptr); }

    Var leaf(Parameter& p) {
        Parameter* ptr = &p;
        return push(p.value, [ptr](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            for (std::size_t i = 0; i < g.size(); ++i) ptr->grad[i] += g[i];
        });
    }

    Var push(Tensor value, std::function<void(Tape&, std::size_t)> backward) {
        nodes_.push_back(Node{std::move(value), {}, false, std::move(backward)});
        return Var{this, nodes_.size() - 1};
    }

    [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    [[nodiscard]] const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }

    /// Gradient slot of `id`, zero-initialized on first access.
    Tensor& grad_slot(std::size_t id) {
        auto& node = nodes_[id];
        if (!node.has_grad) {
            node.grad = Tensor(node.value.shape);
            node.has_grad = true;
        }
        return node.grad;
    }

    [[nodiscard]] bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

    /// Seeds d(loss)/d(loss) = 1 and walks the tape backwards once.
    void backward(Var loss) {
        require(loss.tape == this, ErrorKind::invalid_argument, "loss belongs to another tape");
        if (value(loss.id).size() != 1)
            fail(ErrorKind::dimension_mismatch,
                 "backward needs a scalar loss, got shape " + shape_string(value(loss.id).shape));
        grad_slot(loss.id)[0] += 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (nodes_[i].has_grad && nodes_[i].backward) nodes_[i].backward(*this, i);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline void same_tape(Var a, Var b) {
    require(a.tape == b.tape, ErrorKind::invalid_argument, "operands live on different tapes");
}

inline void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        fail(ErrorKind::dimension_mismatch,
             std::string(op) + ": shapes " + shape_string(a.shape) + " and " + shape_string(b.shape));
}

/// C[m,n] += A[m,k] * B[k,n] with optional transposes, row-major.
inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool trans_a, bool trans_b) {
    if (trans_b) {
        if (!trans_a) {
            // Row-by-row dot products: both operands are read contiguously.
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = a + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* brow = b + j * k;
                    double s = 0.0;
                    for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                    c[i * n + j] += s;
                }
            }
            return;
        }
        std::vector<double> bt(k * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
        gemm(a, bt.data(), c, m, k, n, trans_a, false);
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

inline Var add(Var a, Var b) {
    detail::same_tape(a, b);
    detail::same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape->push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (Var v : {a, b}) {
            auto& gv = t.grad_slot(v.id);
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    detail::same_tape(a, b);
    detail::same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.tape->push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = t.grad_slot(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
}

inline Var mul(Var a, Var b) {
    detail::same_tape(a, b);
    detail::same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape->push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a.id);
        const Tensor& bv = t.value(b.id);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        auto& gb = t.grad_slot(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
}

inline Var scale(Var a, double c) {
    Tensor out = a.value();
    for (auto& x : out.data) x *= c;
    return a.tape->push(std::move(out), [a, c](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

/// Adds vector `b` (length = last dim of `a`) to every row of `a`.
inline Var add_row(Var a, Var b) {
    detail::same_tape(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    if (bv.rank() != 1 || av.shape.empty() || av.last() != bv.size())
        fail(ErrorKind::dimension_mismatch,
             "add_row: " + shape_string(av.shape) + " and " + shape_string(bv.shape));
    Tensor out = av;
    const std::size_t n = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return a.tape->push(std::move(out), [a, b, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = t.grad_slot(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    });
}

/// Row-major matrix product. `a` is [m,k] or [B,m,k]; `b` is [k,n] (shared) or [B,k,n].
inline Var matmul(Var a, Var b) {
    detail::same_tape(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    require(av.rank() >= 2 && av.rank() <= 3 && bv.rank() >= 2 && bv.rank() <= 3,
            ErrorKind::dimension_mismatch, "matmul supports rank 2 and 3 operands");
    const std::size_t m = av.shape[av.rank() - 2];
    const std::size_t k = av.shape[av.rank() - 1];
    const std::size_t kb = bv.shape[bv.rank() - 2];
    const std::size_t n = bv.shape[bv.rank() - 1];
    if (k != kb)
        fail(ErrorKind::dimension_mismatch,
             "matmul: " + shape_string(av.shape) + " x " + shape_string(bv.shape));
    const std::size_t batch = av.rank() == 3 ? av.shape[0] : 1;
    const bool b_batched = bv.rank() == 3;
    if (b_batched) {
        require(av.rank() == 3 && bv.shape[0] == batch, ErrorKind::dimension_mismatch,
                "matmul: batch sizes differ");
    }

    if (!b_batched) {
        // Fold the batch into rows: one large product.
        const std::size_t rows = batch * m;
        Shape shape = av.shape;
        shape.back() = n;
        Tensor out(shape);
        detail::gemm(av.data.data(), bv.data.data(), out.data.data(), rows, k, n, false, false);
        return a.tape->push(std::move(out), [a, b, rows, k, n](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            auto& ga = t.grad_slot(a.id);
            detail::gemm(g.data.data(), t.value(b.id).data.data(), ga.data.data(), rows, n, k,
                         false, true);
            auto& gb = t.grad_slot(b.id);
            detail::gemm(t.value(a.id).data.data(), g.data.data(), gb.data.data(), k, rows, n, true,
                         false);
        });
    }

    Tensor out(Shape{batch, m, n});
    for (std::size_t s = 0; s < batch; ++s) {
        detail::gemm(av.data.data() + s * m * k, bv.data.data() + s * k * n,
                     out.data.data() + s * m * n, m, k, n, false, false);
    }
    return a.tape->push(std::move(out), [a, b, batch, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a.id);
        const Tensor& bv = t.value(b.id);
        auto& ga = t.grad_slot(a.id);
        auto& gb = t.grad_slot(b.id);
        for (std::size_t s = 0; s < batch; ++s) {
            detail::gemm(g.data.data() + s * m * n, bv.data.data() + s * k * n,
                         ga.data.data() + s * m * k, m, n, k, false, true);
            detail::gemm(av.data.data() + s * m * k, g.data.data() + s * m * n,
                         gb.data.data() + s * k * n, k, m, n, true, false);
        }
    });
}

/// Swaps the last two axes.
inline Var transpose(Var a) {
    const auto& av = a.value();
    require(av.rank() >= 2, ErrorKind::dimension_mismatch, "transpose needs rank >= 2");
    const std::size_t r = av.shape[av.rank() - 2];
    const std::size_t c = av.shape[av.rank() - 1];
    const std::size_t batch = av.size() / (r * c);
    Shape shape = av.shape;
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    Tensor out(shape);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[s * r * c + j * r + i] = av[s * r * c + i * c + j];
    return a.tape->push(std::move(out), [a, batch, r, c](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[s * r * c + i * c + j] += g[s * r * c + j * r + i];
    });
}

inline Var reshape(Var a, Shape shape) {
    if (numel(shape) != a.value().size())
        fail(ErrorKind::dimension_mismatch,
             "reshape " + shape_string(a.value().shape) + " to " + shape_string(shape));
    Tensor out(std::move(shape), a.value().data);
    return a.tape->push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

/// Picks index `step` along axis 1 of a [B,T,d] tensor, giving [B,d].
inline Var select_step(Var a, std::size_t step) {
    const auto& av = a.value();
    if (av.rank() != 3 || step >= av.shape[1])
        fail(ErrorKind::dimension_mismatch,
             "select_step: bad step for shape " + shape_string(av.shape));
    const std::size_t B = av.shape[0];
    const std::size_t T = av.shape[1];
    const std::size_t D = av.shape[2];
    Tensor out(Shape{B, D});
    for (std::size_t b = 0; b < B; ++b)
        std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>((b * T + step) * D), D,
                    out.data.begin() + static_cast<std::ptrdiff_t>(b * D));
    return a.tape->push(std::move(out), [a, B, T, D, step](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < D; ++j) ga[(b * T + step) * D + j] += g[b * D + j];
    });
}

/// Averages a [B,T,d] tensor over axis 1.
inline Var mean_steps(Var a) {
    const auto& av = a.value();
    require(av.rank() == 3, ErrorKind::dimension_mismatch, "mean_steps needs [B,T,d]");
    const std::size_t B = av.shape[0];
    const std::size_t T = av.shape[1];
    const std::size_t D = av.shape[2];
    Tensor out(Shape{B, D});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < T; ++s)
            for (std::size_t j = 0; j < D; ++j) out[b * D + j] += av[(b * T + s) * D + j] / double(T);
    return a.tape->push(std::move(out), [a, B, T, D](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t s = 0; s < T; ++s)
                for (std::size_t j = 0; j < D; ++j) ga[(b * T + s) * D + j] += g[b * D + j] / double(T);
    });
}

inline Var relu(Var a) {
    Tensor out = a.value();
    for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
    return a.tape->push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a.id);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) ga[i] += g[i];
    });
}

inline Var sqrt(Var a) {
    Tensor out = a.value();
    for (auto& x : out.data) {
        require(x >= 0.0, ErrorKind::non_finite, "sqrt of a negative value");
        x = std::sqrt(x);
    }
    return a.tape->push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0) ga[i] += g[i] / (2.0 * y[i]);
    });
}

/// Softmax along the last axis.
inline Var softmax(Var a) {
    const auto& av = a.value();
    const std::size_t n = av.last();
    const std::size_t rows = av.rows();
    Tensor out = av;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = out.data.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
    return a.tape->push(std::move(out), [a, rows, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        auto& ga = t.grad_slot(a.id);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
        }
    });
}

/// Layer normalization over the last axis with learned gain and shift.
inline Var layer_norm(Var a, Var gain, Var shift, double eps = 1e-5) {
    detail::same_tape(a, gain);
    detail::same_tape(a, shift);
    const auto& av = a.value();
    const std::size_t n = av.last();
    const std::size_t rows = av.rows();
    require(gain.value().size() == n && shift.value().size() == n, ErrorKind::dimension_mismatch,
            "layer_norm: gain/shift must match the last dimension");
    Tensor out(av.shape);
    Tensor xhat(av.shape);
    std::vector<double> inv_std(rows);
    const auto& gv = gain.value();
    const auto& sv = shift.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data.data() + r * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x[j];
        mean /= double(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= double(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[r * n + j] = (x[j] - mean) * inv_std[r];
            out[r * n + j] = xhat[r * n + j] * gv[j] + sv[j];
        }
    }
    return a.tape->push(
        std::move(out), [a, gain, shift, rows, n, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& gv = t.value(gain.id);
            auto& ga = t.grad_slot(a.id);
            auto& gg = t.grad_slot(gain.id);
            auto& gs = t.grad_slot(shift.id);
            for (std::size_t r = 0; r < rows; ++r) {
                double sum_dx = 0.0;
                double sum_dx_xhat = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t i = r * n + j;
                    gg[j] += g[i] * xhat[i];
                    gs[j] += g[i];
                    const double dx = g[i] * gv[j];
                    sum_dx += dx;
                    sum_dx_xhat += dx * xhat[i];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t i = r * n + j;
                    const double dx = g[i] * gv[j];
                    ga[i] += inv_std[r] / double(n) *
                             (double(n) * dx - sum_dx - xhat[i] * sum_dx_xhat);
                }
            }
        });
}

inline Var sum(Var a) {
    double s = 0.0;
    for (double x : a.value().data) s += x;
    return a.tape->push(Tensor(Shape{1}, s), [a](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto& ga = t.grad_slot(a.id);
        for (auto& x : ga.data) x += g;
    });
}

inline Var mean(Var a) {
    const double n = double(a.value().size());
    return scale(sum(a), 1.0 / n);
}

/// Mean squared error over all elements.
inline Var mse(Var pred, Var target) {
    const auto d = sub(pred, target);
    return mean(mul(d, d));
}

inline Var rmse(Var pred, Var target) { return sqrt(mse(pred, target)); }

// ---------------------------------------------------------------------------
// Initialization and parameter sets

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    Tensor t(Shape{fan_in, fan_out});
    for (auto& x : t.data) x = rng.uniform(-limit, limit);
    return t;
}

/// Ordered, named parameter collection shared by models and optimizers.
class ParameterSet {
public:
    Parameter& add(std::string name, Tensor value) {
        for (const auto& p : params_)
            require(p->name != name, ErrorKind::duplicate, "duplicate parameter '" + name + "'");
        params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
        return *params_.back();
    }

    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    Parameter& find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return *p;
        fail(ErrorKind::unknown_id, "no parameter named '" + name + "'");
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    /// Flat JSON manifest: `{"tensors": [{"name", "shape", "values"}]}`.
    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json tensors = nlohmann::json::array();
        for (const auto& p : params_) {
            tensors.push_back({{"name", p->name}, {"shape", p->value.shape}, {"values", p->value.data}});
        }
        return {{"tensors", tensors}};
    }

    /// Loads values into the existing parameters, checking names and shapes.
    void load_json(const nlohmann::json& manifest) {
        require(manifest.contains("tensors") && manifest["tensors"].is_array(), ErrorKind::schema,
                "weight manifest lacks a tensors array");
        const auto& tensors = manifest["tensors"];
        require(tensors.size() == params_.size(), ErrorKind::dimension_mismatch,
                "weight manifest has " + std::to_string(tensors.size()) + " tensors, model expects " +
                    std::to_string(params_.size()));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& entry = tensors[i];
            auto& p = *params_[i];
            require(entry.value("name", "") == p.name, ErrorKind::schema,
                    "weight manifest tensor " + std::to_string(i) + " should be '" + p.name + "'");
            const auto shape = entry.at("shape").get<Shape>();
            require(shape == p.value.shape, ErrorKind::dimension_mismatch,
                    "tensor '" + p.name + "' has shape " + shape_string(shape) + ", expected " +
                        shape_string(p.value.shape));
            auto values = entry.at("values").get<std::vector<double>>();
            require(values.size() == p.value.size(), ErrorKind::dimension_mismatch,
                    "tensor '" + p.name + "' has the wrong number of values");
            p.value.data = std::move(values);
        }
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

// ---------------------------------------------------------------------------
// Optimizers

inline void check_finite_grads(const ParameterSet& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (double g : params[i].grad.data) {
            if (!std::isfinite(g))
                fail(ErrorKind::non_finite,
                     "non-finite gradient in parameter '" + params[i].name + "'");
        }
    }
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class Adam {
public:
    Adam(const ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
        require(cfg.lr > 0.0, ErrorKind::invalid_argument, "Adam learning rate must be positive");
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_.emplace_back(params[i].value.shape);
            v_.emplace_back(params[i].value.shape);
        }
    }

    void step(ParameterSet& params) {
        require(params.size() == m_.size(), ErrorKind::dimension_mismatch,
                "optimizer state does not match the parameter set");
        check_finite_grads(params);
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                p.value[j] -= cfg_.lr * cfg_.weight_decay * p.value[j];
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                p.value[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
            }
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    long t_ = 0;
};

struct RmspropConfig {
    double lr = 1e-4;
    double alpha = 0.99;
    double eps = 1e-8;
    double momentum = 0.9;
    double weight_decay = 1e-7;
};

class Rmsprop {
public:
    Rmsprop(const ParameterSet& params, RmspropConfig cfg) : cfg_(cfg) {
        require(cfg.lr > 0.0, ErrorKind::invalid_argument, "RMSprop learning rate must be positive");
        for (std::size_t i = 0; i < params.size(); ++i) {
            square_.emplace_back(params[i].value.shape);
            buffer_.emplace_back(params[i].value.shape);
        }
    }

    void step(ParameterSet& params) {
        require(params.size() == square_.size(), ErrorKind::dimension_mismatch,
                "optimizer state does not match the parameter set");
        check_finite_grads(params);
        ++t_;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            auto& sq = square_[i];
            auto& buf = buffer_[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                p.value[j] -= cfg_.lr * cfg_.weight_decay * p.value[j];
                sq[j] = cfg_.alpha * sq[j] + (1.0 - cfg_.alpha) * g * g;
                const double scaled = g / (std::sqrt(sq[j]) + cfg_.eps);
                buf[j] = cfg_.momentum * buf[j] + scaled;
                p.value[j] -= cfg_.lr * buf[j];
            }
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    [[nodiscard]] const RmspropConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    RmspropConfig cfg_;
    std::vector<Tensor> square_;
    std::vector<Tensor> buffer_;
    long t_ = 0;
};

}  // namespace msent::ad
