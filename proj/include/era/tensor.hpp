#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "era/errors.hpp"

namespace era {

// ============================================================================
// Tensor
// ============================================================================

using Shape = std::vector<std::size_t>;

/**
 * Dense double-precision tensor participating in reverse-mode differentiation.
 *
 * A Tensor is a cheap handle (shared ownership) to one payload holding the
 * shape, row-major values, and a gradient buffer of the same size. Operations
 * are free functions that take the recording Tape explicitly; a node is pushed
 * onto the tape only when at least one input requires gradients.
 *
 * The gradient buffer is all-zero right after creation and accumulates
 * additively across backward passes until zero_grad() is called.
 */
class Tensor {
  public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        std::size_t n = count(shape);
        if (n == 0) {
            throw DimensionError("Tensor::from: empty shape is not allowed");
        }
        if (values.size() != n) {
            throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                                 " values for a shape holding " + std::to_string(n));
        }
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw NumericError("Tensor::from: non-finite input value");
            }
        }
        return Tensor(std::move(shape), std::move(values), requires_grad);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::size_t n = count(shape);
        if (n == 0) {
            throw DimensionError("Tensor::zeros: empty shape is not allowed");
        }
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::size_t n = count(shape);
        if (n == 0) {
            throw DimensionError("Tensor::full: empty shape is not allowed");
        }
        if (!std::isfinite(value)) {
            throw NumericError("Tensor::full: non-finite fill value");
        }
        return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return full({1}, value, requires_grad);
    }

    /// Gaussian-filled tensor, mean 0, the given standard deviation.
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad = false) {
        std::size_t n = count(shape);
        if (n == 0) {
            throw DimensionError("Tensor::randn: empty shape is not allowed");
        }
        std::normal_distribution<double> dist(0.0, stddev);
        std::vector<double> values(n);
        for (double& v : values) {
            v = dist(rng);
        }
        return Tensor(std::move(shape), std::move(values), requires_grad);
    }

    const Shape& shape() const { return p_->shape; }
    std::size_t numel() const { return p_->values.size(); }
    std::size_t rows() const { return p_->shape.at(0); }
    std::size_t cols() const { return p_->shape.size() == 2 ? p_->shape[1] : 1; }
    bool is_scalar() const { return numel() == 1; }
    bool defined() const { return static_cast<bool>(p_); }

    // A Tensor is a handle: const handles still reach mutable payload, the
    // same way a const shared_ptr does.
    std::vector<double>& values() const { return p_->values; }
    std::vector<double>& grad() const { return p_->grad; }

    double& at(std::size_t r, std::size_t c) const { return p_->values[r * cols() + c]; }

    /// Value of a scalar tensor.
    double item() const {
        if (!is_scalar()) {
            throw ContractError("Tensor::item: tensor is not scalar");
        }
        return p_->values[0];
    }

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool flag) { p_->requires_grad = flag; }

    /// Identifier assigned by the owning tape; 0 for leaves and constants.
    std::size_t node_id() const { return p_->node_id; }

    void zero_grad() { std::fill(p_->grad.begin(), p_->grad.end(), 0.0); }

    /// Constant copy of the current values, cut off from any tape.
    Tensor detach() const { return Tensor(p_->shape, p_->values, false); }

    /// Deep copy preserving requires_grad; gradient starts at zero.
    Tensor clone() const { return Tensor(p_->shape, p_->values, p_->requires_grad); }

    bool same_shape(const Tensor& other) const { return p_->shape == other.p_->shape; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < p_->shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(p_->shape[i]);
        }
        return s + "]";
    }

  private:
    struct Payload {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
        std::size_t node_id = 0;
    };

    Tensor(Shape shape, std::vector<double> values, bool requires_grad)
        : p_(std::make_shared<Payload>()) {
        p_->shape = std::move(shape);
        p_->values = std::move(values);
        p_->grad.assign(p_->values.size(), 0.0);
        p_->requires_grad = requires_grad;
    }

    static std::size_t count(const Shape& shape) {
        std::size_t n = shape.empty() ? 0 : 1;
        for (std::size_t d : shape) {
            n *= d;
        }
        return n;
    }

    friend class Tape;
    std::shared_ptr<Payload> p_;
};

// ============================================================================
// Tape
// ============================================================================

/**
 * Recording of differentiable operations in execution order.
 *
 * backward() replays the recorded adjoint rules strictly in reverse order,
 * which fixes the accumulation order and makes gradients bit-reproducible.
 * A tape can drive at most one backward pass; reset() makes it reusable.
 * A tape must not be shared across threads.
 */
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Number of recorded nodes.
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    /// Registers the adjoint rule of an operation and stamps the output with
    /// its node id. Called by operations, not by user code.
    void record(Tensor& out, std::function<void()> backward_fn) {
        if (consumed_) {
            throw StateError("Tape::record: tape already consumed by backward; call reset()");
        }
        nodes_.push_back(std::move(backward_fn));
        out.p_->node_id = nodes_.size();
    }

    /**
     * Reverse-mode sweep from a scalar loss. Seeds the loss gradient with 1
     * and replays every adjoint rule in reverse recording order. Marks the
     * tape consumed; a second call without reset() is rejected.
     */
    void backward(Tensor& loss) {
        if (!loss.is_scalar()) {
            throw ContractError("Tape::backward: loss must be scalar, got shape " + loss.shape_string());
        }
        if (consumed_) {
            throw StateError("Tape::backward: tape already consumed; call reset()");
        }
        if (!loss.requires_grad()) {
            throw ContractError("Tape::backward: loss does not depend on any tracked tensor");
        }
        loss.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            (*it)();
        }
        consumed_ = true;
    }

    /// Drops all recorded nodes and clears the consumed flag.
    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

  private:
    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

// ============================================================================
// Operations
// ============================================================================

namespace detail {

inline void ensure_finite(const Tensor& t, const char* op) {
    const auto& v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(std::string(op) + ": non-finite value produced at flat index " +
                               std::to_string(i));
        }
    }
}

inline void ensure_2d(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-d tensor, got " + t.shape_string());
    }
}

inline void ensure_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

} // namespace detail

/// Matrix product: a[r x c] * b[c x k] -> [r x k].
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::ensure_2d(a, "matmul");
    detail::ensure_2d(b, "matmul");
    std::size_t r = a.shape()[0], c = a.shape()[1], c2 = b.shape()[0], k = b.shape()[1];
    if (c != c2) {
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    std::vector<double> out(r * k, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double aij = a.values()[i * c + j];
            for (std::size_t l = 0; l < k; ++l) {
                out[i * k + l] += aij * b.values()[j * k + l];
            }
        }
    }
    bool ng = a.requires_grad() || b.requires_grad();
    Tensor result = Tensor::from({r, k}, std::move(out), ng);
    detail::ensure_finite(result, "matmul");
    if (ng) {
        tape.record(result, [a, b, result, r, c, k]() {
            // d(a*b) = go * b^T into a, a^T * go into b.
            if (a.requires_grad()) {
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t l = 0; l < k; ++l) {
                            acc += result.grad()[i * k + l] * b.values()[j * k + l];
                        }
                        a.grad()[i * c + j] += acc;
                    }
                }
            }
            if (b.requires_grad()) {
                for (std::size_t j = 0; j < c; ++j) {
                    for (std::size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i) {
                            acc += a.values()[i * c + j] * result.grad()[i * k + l];
                        }
                        b.grad()[j * k + l] += acc;
                    }
                }
            }
        });
    }
    return result;
}

/// Elementwise sum of two same-shape tensors.
inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::ensure_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] + b.values()[i];
    }
    bool ng = a.requires_grad() || b.requires_grad();
    Tensor result = Tensor::from(a.shape(), std::move(out), ng);
    detail::ensure_finite(result, "add");
    if (ng) {
        tape.record(result, [a, b, result]() {
            for (std::size_t i = 0; i < result.numel(); ++i) {
                double g = result.grad()[i];
                if (a.requires_grad()) a.grad()[i] += g;
                if (b.requires_grad()) b.grad()[i] += g;
            }
        });
    }
    return result;
}

/// Elementwise difference a - b of two same-shape tensors.
inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::ensure_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] - b.values()[i];
    }
    bool ng = a.requires_grad() || b.requires_grad();
    Tensor result = Tensor::from(a.shape(), std::move(out), ng);
    detail::ensure_finite(result, "sub");
    if (ng) {
        tape.record(result, [a, b, result]() {
            for (std::size_t i = 0; i < result.numel(); ++i) {
                double g = result.grad()[i];
                if (a.requires_grad()) a.grad()[i] += g;
                if (b.requires_grad()) b.grad()[i] -= g;
            }
        });
    }
    return result;
}

/// Hadamard product of two same-shape tensors.
inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::ensure_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] * b.values()[i];
    }
    bool ng = a.requires_grad() || b.requires_grad();
    Tensor result = Tensor::from(a.shape(), std::move(out), ng);
    detail::ensure_finite(result, "mul");
    if (ng) {
        tape.record(result, [a, b, result]() {
            // Product rule: d(ab) = go*b into a, go*a into b.
            for (std::size_t i = 0; i < result.numel(); ++i) {
                double g = result.grad()[i];
                if (a.requires_grad()) a.grad()[i] += g * b.values()[i];
                if (b.requires_grad()) b.grad()[i] += g * a.values()[i];
            }
        });
    }
    return result;
}

/// Multiplication by a compile-time-known constant.
inline Tensor scale(Tape& tape, const Tensor& a, double c) {
    if (!std::isfinite(c)) {
        throw ParameterError("scale: factor must be finite");
    }
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] * c;
    }
    bool ng = a.requires_grad();
    Tensor result = Tensor::from(a.shape(), std::move(out), ng);
    detail::ensure_finite(result, "scale");
    if (ng) {
        tape.record(result, [a, result, c]() {
            for (std::size_t i = 0; i < result.numel(); ++i) {
                a.grad()[i] += c * result.grad()[i];
            }
        });
    }
    return result;
}

/// Adds a length-C row vector to every row of a [n x C] matrix. The only
/// shape coercion in the library; everything else demands exact shapes.
inline Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
    detail::ensure_2d(a, "add_rowvec");
    if (v.shape().size() != 1 || v.shape()[0] != a.shape()[1]) {
        throw DimensionError("add_rowvec: vector " + v.shape_string() + " does not match row width of " +
                             a.shape_string());
    }
    std::size_t n = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = a.values()[i * c + j] + v.values()[j];
        }
    }
    bool ng = a.requires_grad() || v.requires_grad();
    Tensor result = Tensor::from(a.shape(), std::move(out), ng);
    detail::ensure_finite(result, "add_rowvec");
    if (ng) {
        tape.record(result, [a, v, result, n, c]() {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    double g = result.grad()[i * c + j];
                    if (a.requires_grad()) a.grad()[i * c + j] += g;
                    if (v.requires_grad()) v.grad()[j] += g;
                }
            }
        });
    }
    return result;
}

/// Rectified linear unit. The subgradient at exactly 0 is taken as 0.
inline Tensor relu(Tape& tape, const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    }
    bool ng = a.requires_grad();
    Tensor result = Tensor::from(a.shape(), std::move(out), ng);
    if (ng) {
        tape.record(result, [a, result]() {
            for (std::size_t i = 0; i < result.numel(); ++i) {
                if (a.values()[i] > 0.0) {
                    a.grad()[i] += result.grad()[i];
                }
            }
        });
    }
    return result;
}

/// Mean over all elements, returned as a scalar tensor.
inline Tensor mean(Tape& tape, const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) {
        acc += v;
    }
    double m = acc / static_cast<double>(a.numel());
    bool ng = a.requires_grad();
    Tensor result = Tensor::from({1}, {m}, ng);
    detail::ensure_finite(result, "mean");
    if (ng) {
        std::size_t n = a.numel();
        tape.record(result, [a, result, n]() {
            double g = result.grad()[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                a.grad()[i] += g;
            }
        });
    }
    return result;
}

/// Sum over all elements, returned as a scalar tensor.
inline Tensor sum(Tape& tape, const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) {
        acc += v;
    }
    bool ng = a.requires_grad();
    Tensor result = Tensor::from({1}, {acc}, ng);
    detail::ensure_finite(result, "sum");
    if (ng) {
        tape.record(result, [a, result]() {
            double g = result.grad()[0];
            for (std::size_t i = 0; i < a.numel(); ++i) {
                a.grad()[i] += g;
            }
        });
    }
    return result;
}

/**
 * Row-wise softmax of logits divided by temperature T > 0.
 *
 * Each row is shifted by its maximum before exponentiation, so arbitrarily
 * large logits stay finite. Rows of the result sum to 1.
 */
inline Tensor softmax_with_temperature(Tape& tape, const Tensor& logits, double temperature) {
    detail::ensure_2d(logits, "softmax_with_temperature");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("softmax_with_temperature: temperature must be positive and finite");
    }
    std::size_t n = logits.shape()[0], m = logits.shape()[1];
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        double hi = logits.values()[i * m];
        for (std::size_t j = 1; j < m; ++j) {
            hi = std::max(hi, logits.values()[i * m + j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double e = std::exp((logits.values()[i * m + j] - hi) / temperature);
            out[i * m + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < m; ++j) {
            out[i * m + j] /= denom;
        }
    }
    bool ng = logits.requires_grad();
    Tensor result = Tensor::from(logits.shape(), std::move(out), ng);
    detail::ensure_finite(result, "softmax_with_temperature");
    if (ng) {
        tape.record(result, [logits, result, n, m, temperature]() {
            // dz_j = (1/T) * y_j * (go_j - sum_i go_i y_i) per row.
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    dot += result.grad()[i * m + j] * result.values()[i * m + j];
                }
                for (std::size_t j = 0; j < m; ++j) {
                    double y = result.values()[i * m + j];
                    logits.grad()[i * m + j] +=
                        y * (result.grad()[i * m + j] - dot) / temperature;
                }
            }
        });
    }
    return result;
}

} // namespace era
