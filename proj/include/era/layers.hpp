#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "era/errors.hpp"
#include "era/tensor.hpp"

namespace era {

enum class Mode { train, eval };

/// Fully connected layer computing x * W^T (+ bias per row).
struct LinearLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]; undefined handle when the layer has no bias
    bool has_bias = true;
    bool trainable = true;

    LinearLayer() = default;
    LinearLayer(std::size_t in_dim, std::size_t out_dim, bool with_bias = true)
        : weight(Tensor::zeros({out_dim, in_dim}, true)), has_bias(with_bias) {
        if (in_dim == 0 || out_dim == 0) {
            throw SpecError("LinearLayer: zero width");
        }
        if (with_bias) {
            bias = Tensor::zeros({out_dim}, true);
        }
    }

    std::size_t in_dim() const { return weight.shape()[1]; }
    std::size_t out_dim() const { return weight.shape()[0]; }

    Tensor forward(Tape& tape, const Tensor& x) const {
        detail::ensure_2d(x, "LinearLayer::forward");
        std::size_t n = x.shape()[0], in = x.shape()[1], out = out_dim();
        if (in != in_dim()) {
            throw DimensionError("LinearLayer::forward: input width " + std::to_string(in) +
                                 " does not match layer width " + std::to_string(in_dim()));
        }
        std::vector<double> vals(n * out, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out; ++o) {
                double acc = has_bias ? bias.values()[o] : 0.0;
                for (std::size_t j = 0; j < in; ++j) {
                    acc += x.values()[i * in + j] * weight.values()[o * in + j];
                }
                vals[i * out + o] = acc;
            }
        }
        bool ng = x.requires_grad() || weight.requires_grad() ||
                  (has_bias && bias.requires_grad());
        Tensor result = Tensor::from({n, out}, std::move(vals), ng);
        detail::ensure_finite(result, "LinearLayer::forward");
        if (ng) {
            Tensor w = weight, b = bias;
            bool hb = has_bias;
            tape.record(result, [x, w, b, hb, result, n, in, out]() {
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t o = 0; o < out; ++o) {
                        double g = result.grad()[i * out + o];
                        if (g == 0.0) continue;
                        if (x.requires_grad()) {
                            for (std::size_t j = 0; j < in; ++j) {
                                x.grad()[i * in + j] += g * w.values()[o * in + j];
                            }
                        }
                        if (w.requires_grad()) {
                            for (std::size_t j = 0; j < in; ++j) {
                                w.grad()[o * in + j] += g * x.values()[i * in + j];
                            }
                        }
                        if (hb && b.requires_grad()) {
                            b.grad()[o] += g;
                        }
                    }
                }
            });
        }
        return result;
    }

    std::size_t parameter_count() const {
        return weight.numel() + (has_bias ? bias.numel() : 0);
    }

    void set_trainable(bool flag) {
        trainable = flag;
        weight.set_requires_grad(flag);
        if (has_bias) {
            bias.set_requires_grad(flag);
        }
    }

    template <class F>
    void visit_params(const std::string& prefix, F&& fn) {
        fn(prefix + ".weight", weight);
        if (has_bias) {
            fn(prefix + ".bias", bias);
        }
    }
};

/**
 * Batch normalization over the channel (column) axis.
 *
 * Train mode normalizes with per-batch statistics (biased variance) and
 * folds them into the running estimates with the configured momentum; the
 * running variance uses the unbiased estimator. Eval mode normalizes with
 * the running estimates and never touches them.
 */
struct BatchNormLayer {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    Mode mode = Mode::train;
    bool trainable = true;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels)
        : gamma(Tensor::full({channels}, 1.0, true)),
          beta(Tensor::zeros({channels}, true)),
          running_mean(Tensor::zeros({channels})),
          running_var(Tensor::full({channels}, 1.0)) {
        if (channels == 0) {
            throw SpecError("BatchNormLayer: zero channels");
        }
    }

    std::size_t channels() const { return gamma.shape()[0]; }

    Tensor forward(Tape& tape, const Tensor& x) {
        detail::ensure_2d(x, "BatchNormLayer::forward");
        std::size_t n = x.shape()[0], c = x.shape()[1];
        if (c != channels()) {
            throw DimensionError("BatchNormLayer::forward: " + std::to_string(c) +
                                 " channels, layer holds " + std::to_string(channels()));
        }
        return mode == Mode::train ? forward_train(tape, x, n, c) : forward_eval(tape, x, n, c);
    }

    std::size_t parameter_count() const { return gamma.numel() + beta.numel(); }

    void set_trainable(bool flag) {
        trainable = flag;
        gamma.set_requires_grad(flag);
        beta.set_requires_grad(flag);
    }

    template <class F>
    void visit_params(const std::string& prefix, F&& fn) {
        fn(prefix + ".gamma", gamma);
        fn(prefix + ".beta", beta);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        fn(prefix + ".running_mean", running_mean);
        fn(prefix + ".running_var", running_var);
    }

  private:
    Tensor forward_train(Tape& tape, const Tensor& x, std::size_t n, std::size_t c) {
        if (n < 2) {
            throw InputError("BatchNormLayer: train mode needs a batch of at least 2 rows");
        }
        std::vector<double> mu(c, 0.0), var(c, 0.0), invstd(c, 0.0);
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += x.values()[i * c + j];
            }
            mu[j] = acc / static_cast<double>(n);
            double sq = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = x.values()[i * c + j] - mu[j];
                sq += d * d;
            }
            var[j] = sq / static_cast<double>(n);
            invstd[j] = 1.0 / std::sqrt(var[j] + eps);
        }

        auto xhat = std::make_shared<std::vector<double>>(n * c);
        std::vector<double> vals(n * c);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double h = (x.values()[i * c + j] - mu[j]) * invstd[j];
                (*xhat)[i * c + j] = h;
                vals[i * c + j] = gamma.values()[j] * h + beta.values()[j];
            }
        }

        double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        for (std::size_t j = 0; j < c; ++j) {
            running_mean.values()[j] = (1.0 - momentum) * running_mean.values()[j] + momentum * mu[j];
            running_var.values()[j] =
                (1.0 - momentum) * running_var.values()[j] + momentum * var[j] * unbias;
        }

        bool ng = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Tensor result = Tensor::from({n, c}, std::move(vals), ng);
        detail::ensure_finite(result, "BatchNormLayer::forward");
        if (ng) {
            Tensor g = gamma, b = beta;
            tape.record(result, [x, g, b, result, xhat, invstd, n, c]() {
                for (std::size_t j = 0; j < c; ++j) {
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        double dy = result.grad()[i * c + j];
                        sum_dy += dy;
                        sum_dy_xhat += dy * (*xhat)[i * c + j];
                    }
                    if (g.requires_grad()) g.grad()[j] += sum_dy_xhat;
                    if (b.requires_grad()) b.grad()[j] += sum_dy;
                    if (x.requires_grad()) {
                        double inv_n = 1.0 / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                            double dy = result.grad()[i * c + j];
                            double h = (*xhat)[i * c + j];
                            x.grad()[i * c + j] +=
                                g.values()[j] * invstd[j] *
                                (dy - inv_n * sum_dy - h * inv_n * sum_dy_xhat);
                        }
                    }
                }
            });
        }
        return result;
    }

    Tensor forward_eval(Tape& tape, const Tensor& x, std::size_t n, std::size_t c) {
        std::vector<double> invstd(c);
        for (std::size_t j = 0; j < c; ++j) {
            invstd[j] = 1.0 / std::sqrt(running_var.values()[j] + eps);
        }
        std::vector<double> vals(n * c);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double h = (x.values()[i * c + j] - running_mean.values()[j]) * invstd[j];
                vals[i * c + j] = gamma.values()[j] * h + beta.values()[j];
            }
        }
        bool ng = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Tensor result = Tensor::from({n, c}, std::move(vals), ng);
        detail::ensure_finite(result, "BatchNormLayer::forward");
        if (ng) {
            Tensor g = gamma, b = beta, rm = running_mean;
            tape.record(result, [x, g, b, rm, result, invstd, n, c]() {
                for (std::size_t j = 0; j < c; ++j) {
                    for (std::size_t i = 0; i < n; ++i) {
                        double dy = result.grad()[i * c + j];
                        if (x.requires_grad()) {
                            x.grad()[i * c + j] += dy * g.values()[j] * invstd[j];
                        }
                        if (g.requires_grad()) {
                            g.grad()[j] += dy * (x.values()[i * c + j] - rm.values()[j]) * invstd[j];
                        }
                        if (b.requires_grad()) {
                            b.grad()[j] += dy;
                        }
                    }
                }
            });
        }
        return result;
    }
};

/// One Linear -> BatchNorm unit, optionally followed by ReLU.
struct DenseBlock {
    LinearLayer linear;
    BatchNormLayer bn;
    bool relu_after = true;

    DenseBlock() = default;
    DenseBlock(std::size_t in_dim, std::size_t out_dim, bool relu)
        : linear(in_dim, out_dim), bn(out_dim), relu_after(relu) {}

    Tensor forward(Tape& tape, const Tensor& x) {
        Tensor h = bn.forward(tape, linear.forward(tape, x));
        return relu_after ? relu(tape, h) : h;
    }

    std::size_t parameter_count() const {
        return linear.parameter_count() + bn.parameter_count();
    }

    void set_mode(Mode m) { bn.mode = m; }

    void set_trainable(bool flag) {
        linear.set_trainable(flag);
        bn.set_trainable(flag);
    }

    template <class F>
    void visit_params(const std::string& prefix, F&& fn) {
        linear.visit_params(prefix + ".linear", fn);
        bn.visit_params(prefix + ".bn", fn);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        bn.visit_buffers(prefix + ".bn", fn);
    }
};

/// Feature extractor: a stack of Linear -> BatchNorm -> ReLU blocks.
struct MlpEncoder {
    std::vector<DenseBlock> blocks;
    std::vector<std::size_t> widths;  // [input, hidden..., output]

    MlpEncoder() = default;
    explicit MlpEncoder(std::vector<std::size_t> layer_widths) : widths(std::move(layer_widths)) {
        if (widths.size() < 2) {
            throw SpecError("MlpEncoder: need at least an input and an output width");
        }
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
            blocks.emplace_back(widths[i], widths[i + 1], true);
        }
    }

    std::size_t input_dim() const { return widths.front(); }
    std::size_t output_dim() const { return widths.back(); }

    Tensor forward(Tape& tape, const Tensor& x) {
        Tensor h = x;
        for (DenseBlock& block : blocks) {
            h = block.forward(tape, h);
        }
        return h;
    }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const DenseBlock& block : blocks) {
            total += block.parameter_count();
        }
        return total;
    }

    void set_mode(Mode m) {
        for (DenseBlock& block : blocks) {
            block.set_mode(m);
        }
    }

    void set_trainable(bool flag) {
        for (DenseBlock& block : blocks) {
            block.set_trainable(flag);
        }
    }

    template <class F>
    void visit_params(const std::string& prefix, F&& fn) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].visit_params(prefix + ".block" + std::to_string(i), fn);
        }
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].visit_buffers(prefix + ".block" + std::to_string(i), fn);
        }
    }
};

/// Bias-free linear map from features to class logits.
struct ClassifierHead {
    LinearLayer linear;  // [classes x features], no bias

    ClassifierHead() = default;
    ClassifierHead(std::size_t feature_dim, std::size_t classes)
        : linear(feature_dim, classes, /*with_bias=*/false) {}

    std::size_t feature_dim() const { return linear.in_dim(); }
    std::size_t classes() const { return linear.out_dim(); }

    Tensor forward(Tape& tape, const Tensor& features) const {
        return linear.forward(tape, features);
    }

    std::size_t parameter_count() const { return linear.parameter_count(); }
    void set_trainable(bool flag) { linear.set_trainable(flag); }

    template <class F>
    void visit_params(const std::string& prefix, F&& fn) {
        linear.visit_params(prefix, fn);
    }
};

/**
 * Width-preserving residual-approximation branch: m Linear -> BatchNorm ->
 * ReLU blocks, with the ReLU after the last block omitted so outputs can be
 * signed. Hidden blocks use `hidden_dim` (0 means same as the input width).
 */
struct ResMBranch {
    std::vector<DenseBlock> blocks;
    std::size_t width = 0;

    ResMBranch() = default;
    ResMBranch(std::size_t io_dim, std::size_t m, std::size_t hidden_dim = 0) : width(io_dim) {
        if (m == 0) {
            throw SpecError("ResMBranch: m must be at least 1");
        }
        std::size_t hidden = hidden_dim == 0 ? io_dim : hidden_dim;
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t in = i == 0 ? io_dim : hidden;
            std::size_t out = i + 1 == m ? io_dim : hidden;
            blocks.emplace_back(in, out, /*relu=*/i + 1 != m);
        }
    }

    std::size_t depth() const { return blocks.size(); }

    Tensor forward(Tape& tape, const Tensor& x) {
        Tensor h = x;
        for (DenseBlock& block : blocks) {
            h = block.forward(tape, h);
        }
        return h;
    }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const DenseBlock& block : blocks) {
            total += block.parameter_count();
        }
        return total;
    }

    void set_mode(Mode m) {
        for (DenseBlock& block : blocks) {
            block.set_mode(m);
        }
    }

    void set_trainable(bool flag) {
        for (DenseBlock& block : blocks) {
            block.set_trainable(flag);
        }
    }

    template <class F>
    void visit_params(const std::string& prefix, F&& fn) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].visit_params(prefix + ".block" + std::to_string(i), fn);
        }
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].visit_buffers(prefix + ".block" + std::to_string(i), fn);
        }
    }
};

// ============================================================================
// Initialization
// ============================================================================

/// Weights from N(0, 2/fan_in), biases zero.
inline void init_parameters(LinearLayer& layer, std::mt19937_64& rng) {
    double stddev = std::sqrt(2.0 / static_cast<double>(layer.in_dim()));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& w : layer.weight.values()) {
        w = dist(rng);
    }
    layer.weight.zero_grad();
    if (layer.has_bias) {
        std::fill(layer.bias.values().begin(), layer.bias.values().end(), 0.0);
        layer.bias.zero_grad();
    }
}

/// Unit scale, zero shift, fresh running statistics.
inline void init_parameters(BatchNormLayer& layer) {
    std::fill(layer.gamma.values().begin(), layer.gamma.values().end(), 1.0);
    std::fill(layer.beta.values().begin(), layer.beta.values().end(), 0.0);
    std::fill(layer.running_mean.values().begin(), layer.running_mean.values().end(), 0.0);
    std::fill(layer.running_var.values().begin(), layer.running_var.values().end(), 1.0);
    layer.gamma.zero_grad();
    layer.beta.zero_grad();
}

inline void init_parameters(DenseBlock& block, std::mt19937_64& rng) {
    init_parameters(block.linear, rng);
    init_parameters(block.bn);
}

inline void init_parameters(MlpEncoder& encoder, std::mt19937_64& rng) {
    for (DenseBlock& block : encoder.blocks) {
        init_parameters(block, rng);
    }
}

inline void init_parameters(ClassifierHead& head, std::mt19937_64& rng) {
    init_parameters(head.linear, rng);
}

/// Branch blocks get the usual treatment except the last batch-norm scale,
/// which starts at exactly zero so a fresh branch contributes nothing in
/// either mode. Zeroing the scale rather than the last linear keeps that
/// batch norm away from its zero-variance regime, where backward passes
/// would be amplified by 1/sqrt(eps).
inline void init_parameters(ResMBranch& branch, std::mt19937_64& rng) {
    for (DenseBlock& block : branch.blocks) {
        init_parameters(block, rng);
    }
    Tensor& last_gamma = branch.blocks.back().bn.gamma;
    std::fill(last_gamma.values().begin(), last_gamma.values().end(), 0.0);
}

template <class LayerT>
void init_parameters(LayerT& layer, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    init_parameters(layer, rng);
}

} // namespace era
