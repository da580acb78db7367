#pragma once

// From-scratch convolutional classifier for orientation input matrices:
//   conv(filters, k x k, stride 1, valid) -> ReLU -> dropout -> flatten
//   -> dense -> ReLU -> dropout -> dense -> ReLU -> dropout -> dense -> softmax
// trained with Adam on categorical cross-entropy plus an L2 penalty on the
// convolution and hidden dense kernels (the output layer is exempt).
//
// The whole stack is templated on the scalar type: float is the training
// workhorse, double makes the finite-difference gradient oracle in the tests
// sharp enough to resolve 1e-4 relative error.  All loops are single-threaded
// and run in a fixed order so (seed, data, config) fully determine the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "imuaug/dataset.hpp"
#include "imuaug/error.hpp"
#include "imuaug/labeling.hpp"
#include "imuaug/util.hpp"

namespace imuaug {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct ModelConfig {
    int conv_filters = 16;
    int kernel = 5;  // square kernel, stride 1, valid padding, single channel
    int dense1 = 512;
    int dense2 = 128;
    int num_classes = 3;
    double dropout_rate = 0.2;  // after the conv, dense1 and dense2 activations
    double l2 = 1e-3;           // conv + hidden dense kernels; output layer exempt
};

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = kAdamBeta1;
    double beta2 = kAdamBeta2;
    double epsilon = kAdamEpsilon;
    int batch_size = 32;
    int patience = 10;  // epochs without validation-loss improvement before stopping
    int max_epochs = 200;
    std::uint64_t seed = 0;
};

// Slanted triangular schedule: linear ramp start_lr -> peak_lr over the first
// peak_epoch epochs, then linear decay to end_lr at total_epochs.  Only the
// dense layers are trainable during fine-tuning; conv tensors stay frozen.
struct FinetuneConfig {
    double start_lr = 2e-5;
    double peak_lr = 1e-4;
    double end_lr = 1e-6;
    int peak_epoch = 5;
    int total_epochs = 20;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_macro_f1 = 0.0;
};

// Dense kernels are stored row-major [in][out] so the batch GEMMs walk both
// operands sequentially; conv kernels are [filter][kr][kc].
template <typename T>
struct Weights {
    std::vector<T> conv_w, conv_b;
    std::vector<T> w1, b1;
    std::vector<T> w2, b2;
    std::vector<T> w3, b3;
};

// Fixed tensor traversal order shared by initialization, Adam state and
// checkpoints.
template <typename T, typename F>
void for_each_tensor(Weights<T>& w, F&& f) {
    f(w.conv_w);
    f(w.conv_b);
    f(w.w1);
    f(w.b1);
    f(w.w2);
    f(w.b2);
    f(w.w3);
    f(w.b3);
}

template <typename T, typename F>
void for_each_tensor(const Weights<T>& w, F&& f) {
    f(w.conv_w);
    f(w.conv_b);
    f(w.w1);
    f(w.b1);
    f(w.w2);
    f(w.b2);
    f(w.w3);
    f(w.b3);
}

template <typename T>
struct ModelState {
    ModelConfig config;
    int rows = 0, cols = 0;  // accepted input shape
    Weights<T> weights;
    std::vector<EpochStats> history;

    int conv_rows() const { return rows - config.kernel + 1; }
    int conv_cols() const { return cols - config.kernel + 1; }
    int flat_dim() const { return conv_rows() * conv_cols() * config.conv_filters; }
};

template <typename T>
std::size_t param_count(const ModelState<T>& m) {
    std::size_t n = 0;
    for_each_tensor(m.weights, [&](const std::vector<T>& t) { n += t.size(); });
    return n;
}

// ---- initialization -------------------------------------------------------

namespace detail {

// Glorot uniform: w ~ U(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
// For the conv layer fan counts follow the usual receptive-field convention:
// fan_in = in_channels * k^2, fan_out = filters * k^2.
template <typename T>
void glorot_fill(std::vector<T>& w, std::size_t count, double fan_in, double fan_out,
                 std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    w.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        w[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
}

inline void validate_model_config(const ModelConfig& cfg) {
    if (cfg.conv_filters < 1 || cfg.kernel < 1 || cfg.dense1 < 1 || cfg.dense2 < 1 ||
        cfg.num_classes < 1)
        throw ConfigError("model config: layer widths must be positive");
    if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0))
        throw ConfigError("model config: dropout rate must lie in [0, 1)");
    if (cfg.l2 < 0.0) throw ConfigError("model config: negative L2 factor");
}

}  // namespace detail

template <typename T = float>
ModelState<T> init_model(const ModelConfig& cfg, int rows, int cols, std::uint64_t seed) {
    detail::validate_model_config(cfg);
    if (rows < cfg.kernel || cols < cfg.kernel)
        throw ConfigError("init_model: " + std::to_string(cfg.kernel) + "x" +
                          std::to_string(cfg.kernel) + " kernel does not fit a " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " input");

    ModelState<T> m;
    m.config = cfg;
    m.rows = rows;
    m.cols = cols;

    std::mt19937_64 rng(seed);
    const double k2 = static_cast<double>(cfg.kernel) * cfg.kernel;
    Weights<T>& w = m.weights;
    detail::glorot_fill(w.conv_w, static_cast<std::size_t>(cfg.conv_filters) * cfg.kernel * cfg.kernel,
                        k2, cfg.conv_filters * k2, rng);
    w.conv_b.assign(cfg.conv_filters, T(0));
    detail::glorot_fill(w.w1, static_cast<std::size_t>(m.flat_dim()) * cfg.dense1, m.flat_dim(),
                        cfg.dense1, rng);
    w.b1.assign(cfg.dense1, T(0));
    detail::glorot_fill(w.w2, static_cast<std::size_t>(cfg.dense1) * cfg.dense2, cfg.dense1,
                        cfg.dense2, rng);
    w.b2.assign(cfg.dense2, T(0));
    detail::glorot_fill(w.w3, static_cast<std::size_t>(cfg.dense2) * cfg.num_classes, cfg.dense2,
                        cfg.num_classes, rng);
    w.b3.assign(cfg.num_classes, T(0));
    return m;
}

// ---- forward pass ---------------------------------------------------------

enum class RunMode { kTrain, kEval };

namespace detail {

// Inverted dropout: an activation is zeroed with probability rate, otherwise
// scaled by 1/(1 - rate), so the expected train-mode activation equals the
// eval-mode one.  Masks store the applied multiplier.
template <typename T>
void dropout_mask(std::vector<T>& mask, std::size_t count, double rate, std::mt19937_64& rng) {
    mask.resize(count);
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < count; ++i) mask[i] = uniform01(rng) < rate ? T(0) : keep;
}

template <typename T>
struct ForwardCache {
    int batch = 0;
    std::vector<T> x;       // batch x rows x cols
    std::vector<T> conv_z;  // batch x conv_rows x conv_cols x filters (pre-activation)
    std::vector<T> h0;      // conv output after ReLU + dropout, flattened channels-last
    std::vector<T> z1, h1;
    std::vector<T> z2, h2;
    std::vector<T> logits, probs;        // batch x num_classes
    std::vector<T> m0, m1, m2;           // dropout multipliers; empty in eval mode
};

template <typename T>
void check_batch(const ModelState<T>& m, const std::vector<const InputMatrix*>& batch) {
    if (batch.empty()) throw InvalidArgument("forward: empty batch");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const InputMatrix& in = *batch[i];
        if (static_cast<int>(in.rows) != m.rows || static_cast<int>(in.cols) != m.cols)
            throw InvalidArgument("forward: batch entry " + std::to_string(i) + " is " +
                                  std::to_string(in.rows) + "x" + std::to_string(in.cols) +
                                  ", model expects " + std::to_string(m.rows) + "x" +
                                  std::to_string(m.cols));
    }
}

template <typename T>
void forward_core(const ModelState<T>& m, const std::vector<const InputMatrix*>& batch,
                  RunMode mode, std::mt19937_64* rng, ForwardCache<T>& c) {
    check_batch(m, batch);
    if (mode == RunMode::kTrain && rng == nullptr)
        throw InvalidArgument("forward: train mode needs an rng for dropout");

    const ModelConfig& cfg = m.config;
    const int N = static_cast<int>(batch.size());
    const int R = m.rows, C = m.cols, K = cfg.kernel, F = cfg.conv_filters;
    const int CR = m.conv_rows(), CC = m.conv_cols(), D = m.flat_dim();
    const int H1 = cfg.dense1, H2 = cfg.dense2, NC = cfg.num_classes;
    const int k2 = K * K;
    const Weights<T>& w = m.weights;

    c.batch = N;
    c.x.resize(static_cast<std::size_t>(N) * R * C);
    for (int i = 0; i < N; ++i)
        for (int p = 0; p < R * C; ++p)
            c.x[static_cast<std::size_t>(i) * R * C + p] = static_cast<T>(batch[i]->data[p]);

    const bool drop = mode == RunMode::kTrain && cfg.dropout_rate > 0.0;
    if (drop) {
        dropout_mask(c.m0, static_cast<std::size_t>(N) * D, cfg.dropout_rate, *rng);
        dropout_mask(c.m1, static_cast<std::size_t>(N) * H1, cfg.dropout_rate, *rng);
        dropout_mask(c.m2, static_cast<std::size_t>(N) * H2, cfg.dropout_rate, *rng);
    } else {
        c.m0.clear();
        c.m1.clear();
        c.m2.clear();
    }

    // Convolution, channels-last so flattening is just a reinterpretation of
    // the conv_rows x conv_cols x filters block.
    c.conv_z.resize(static_cast<std::size_t>(N) * D);
    c.h0.resize(static_cast<std::size_t>(N) * D);
    std::vector<T> taps(k2);
    for (int i = 0; i < N; ++i) {
        const T* x = &c.x[static_cast<std::size_t>(i) * R * C];
        T* z = &c.conv_z[static_cast<std::size_t>(i) * D];
        for (int r = 0; r < CR; ++r) {
            for (int col = 0; col < CC; ++col) {
                for (int dr = 0; dr < K; ++dr)
                    for (int dc = 0; dc < K; ++dc) taps[dr * K + dc] = x[(r + dr) * C + col + dc];
                T* zp = z + (static_cast<std::size_t>(r) * CC + col) * F;
                for (int f = 0; f < F; ++f) {
                    T acc = w.conv_b[f];
                    const T* wf = &w.conv_w[static_cast<std::size_t>(f) * k2];
                    for (int t = 0; t < k2; ++t) acc += wf[t] * taps[t];
                    zp[f] = acc;
                }
            }
        }
        const T* mask = drop ? &c.m0[static_cast<std::size_t>(i) * D] : nullptr;
        T* h = &c.h0[static_cast<std::size_t>(i) * D];
        for (int p = 0; p < D; ++p) {
            T v = z[p] > T(0) ? z[p] : T(0);
            h[p] = mask ? v * mask[p] : v;
        }
    }

    // y = x . W + b with W row-major [in][out]; the i,k,j order keeps the
    // inner loop sequential over both the W row and the output row, and the
    // zero test skips units killed by ReLU or dropout.
    auto dense = [N](const std::vector<T>& in, int din, const std::vector<T>& W,
                     const std::vector<T>& b, int dout, std::vector<T>& out) {
        out.resize(static_cast<std::size_t>(N) * dout);
        for (int i = 0; i < N; ++i) {
            T* y = &out[static_cast<std::size_t>(i) * dout];
            for (int j = 0; j < dout; ++j) y[j] = b[j];
            const T* xi = &in[static_cast<std::size_t>(i) * din];
            for (int k = 0; k < din; ++k) {
                const T v = xi[k];
                if (v == T(0)) continue;
                const T* wk = &W[static_cast<std::size_t>(k) * dout];
                for (int j = 0; j < dout; ++j) y[j] += v * wk[j];
            }
        }
    };
    auto relu_drop = [N](const std::vector<T>& z, int d, const std::vector<T>& mask,
                         std::vector<T>& h) {
        h.resize(static_cast<std::size_t>(N) * d);
        for (std::size_t p = 0; p < z.size(); ++p) {
            T v = z[p] > T(0) ? z[p] : T(0);
            h[p] = mask.empty() ? v : v * mask[p];
        }
    };

    dense(c.h0, D, w.w1, w.b1, H1, c.z1);
    relu_drop(c.z1, H1, c.m1, c.h1);
    dense(c.h1, H1, w.w2, w.b2, H2, c.z2);
    relu_drop(c.z2, H2, c.m2, c.h2);
    dense(c.h2, H2, w.w3, w.b3, NC, c.logits);

    c.probs.resize(static_cast<std::size_t>(N) * NC);
    for (int i = 0; i < N; ++i) {
        const T* z = &c.logits[static_cast<std::size_t>(i) * NC];
        T* p = &c.probs[static_cast<std::size_t>(i) * NC];
        double zmax = z[0];
        for (int j = 1; j < NC; ++j) zmax = std::max(zmax, static_cast<double>(z[j]));
        double sum = 0.0;
        for (int j = 0; j < NC; ++j) sum += std::exp(static_cast<double>(z[j]) - zmax);
        for (int j = 0; j < NC; ++j)
            p[j] = static_cast<T>(std::exp(static_cast<double>(z[j]) - zmax) / sum);
    }
}

}  // namespace detail

// Class-probability rows (batch x num_classes).  Train mode draws fresh
// inverted-dropout masks from the rng; eval mode is deterministic.
template <typename T>
std::vector<double> forward(const ModelState<T>& m, const std::vector<const InputMatrix*>& batch,
                            RunMode mode = RunMode::kEval, std::mt19937_64* rng = nullptr) {
    detail::ForwardCache<T> cache;
    detail::forward_core(m, batch, mode, rng, cache);
    return std::vector<double>(cache.probs.begin(), cache.probs.end());
}

template <typename T>
std::vector<double> forward(const ModelState<T>& m, const std::vector<InputMatrix>& batch,
                            RunMode mode = RunMode::kEval, std::mt19937_64* rng = nullptr) {
    std::vector<const InputMatrix*> ptrs;
    ptrs.reserve(batch.size());
    for (const InputMatrix& b : batch) ptrs.push_back(&b);
    return forward(m, ptrs, mode, rng);
}

// ---- loss and gradients ---------------------------------------------------

template <typename T>
double l2_penalty(const ModelState<T>& m) {
    const Weights<T>& w = m.weights;
    double ssq = 0.0;
    for (T v : w.conv_w) ssq += static_cast<double>(v) * v;
    for (T v : w.w1) ssq += static_cast<double>(v) * v;
    for (T v : w.w2) ssq += static_cast<double>(v) * v;
    return m.config.l2 * ssq;
}

namespace detail {

template <typename T>
void zeros_like(const Weights<T>& shape, Weights<T>& out) {
    out.conv_w.assign(shape.conv_w.size(), T(0));
    out.conv_b.assign(shape.conv_b.size(), T(0));
    out.w1.assign(shape.w1.size(), T(0));
    out.b1.assign(shape.b1.size(), T(0));
    out.w2.assign(shape.w2.size(), T(0));
    out.b2.assign(shape.b2.size(), T(0));
    out.w3.assign(shape.w3.size(), T(0));
    out.b3.assign(shape.b3.size(), T(0));
}

inline int checked_label(const InputMatrix& in, int num_classes) {
    if (in.label < 1 || in.label > num_classes)
        throw InvalidArgument("loss: label " + std::to_string(in.label) + " outside 1.." +
                              std::to_string(num_classes));
    return in.label - 1;
}

}  // namespace detail

// Mean categorical cross-entropy over the batch plus the L2 penalty.  When
// grads is non-null every trainable tensor's gradient is written (conv
// included; fine-tuning simply ignores the frozen ones).  Pass RunMode::kEval
// for a dropout-free loss, which is what the finite-difference tests probe.
template <typename T>
double loss_and_grads(const ModelState<T>& m, const std::vector<const InputMatrix*>& batch,
                      RunMode mode = RunMode::kTrain, std::mt19937_64* rng = nullptr,
                      Weights<T>* grads = nullptr) {
    detail::ForwardCache<T> c;
    detail::forward_core(m, batch, mode, rng, c);

    const ModelConfig& cfg = m.config;
    const int N = c.batch, NC = cfg.num_classes;
    const int D = m.flat_dim(), H1 = cfg.dense1, H2 = cfg.dense2;
    const int C = m.cols, K = cfg.kernel, F = cfg.conv_filters;
    const int CR = m.conv_rows(), CC = m.conv_cols(), k2 = K * K;
    const Weights<T>& w = m.weights;

    double ce = 0.0;
    for (int i = 0; i < N; ++i) {
        const int y = detail::checked_label(*batch[i], NC);
        const double p = c.probs[static_cast<std::size_t>(i) * NC + y];
        ce -= std::log(std::max(p, 1e-300));
    }
    const double loss = ce / N + l2_penalty(m);
    if (grads == nullptr) return loss;

    Weights<T>& g = *grads;
    detail::zeros_like(w, g);

    // dloss/dlogits for softmax + cross-entropy, already averaged over the batch.
    std::vector<T> dz3(static_cast<std::size_t>(N) * NC);
    for (int i = 0; i < N; ++i) {
        const int y = detail::checked_label(*batch[i], NC);
        for (int j = 0; j < NC; ++j)
            dz3[static_cast<std::size_t>(i) * NC + j] =
                (c.probs[static_cast<std::size_t>(i) * NC + j] - (j == y ? T(1) : T(0))) / N;
    }

    // out = dZ . W^T, i.e. out[i][k] = dot(dZ row i, W row k); gW[k][j] +=
    // in[i][k] * dZ[i][j] with the same skip-zero trick as the forward GEMMs.
    auto dense_backward = [N](const std::vector<T>& in, int din, const std::vector<T>& W,
                              const std::vector<T>& dZ, int dout, std::vector<T>& gW,
                              std::vector<T>& gb, std::vector<T>& din_out) {
        din_out.assign(static_cast<std::size_t>(N) * din, T(0));
        for (int i = 0; i < N; ++i) {
            const T* dz = &dZ[static_cast<std::size_t>(i) * dout];
            for (int j = 0; j < dout; ++j) gb[j] += dz[j];
            const T* xi = &in[static_cast<std::size_t>(i) * din];
            T* dx = &din_out[static_cast<std::size_t>(i) * din];
            for (int k = 0; k < din; ++k) {
                const T* wk = &W[static_cast<std::size_t>(k) * dout];
                T acc = T(0);
                for (int j = 0; j < dout; ++j) acc += dz[j] * wk[j];
                dx[k] = acc;
                const T v = xi[k];
                if (v == T(0)) continue;
                T* gw = &gW[static_cast<std::size_t>(k) * dout];
                for (int j = 0; j < dout; ++j) gw[j] += v * dz[j];
            }
        }
    };
    // Backward through h = relu(z) * mask: dz = dh * mask * 1[z > 0].
    auto relu_drop_backward = [](std::vector<T>& dh, const std::vector<T>& z,
                                 const std::vector<T>& mask) {
        for (std::size_t p = 0; p < dh.size(); ++p) {
            T v = z[p] > T(0) ? dh[p] : T(0);
            dh[p] = mask.empty() ? v : v * mask[p];
        }
    };

    std::vector<T> dh2, dh1, dh0;
    dense_backward(c.h2, H2, w.w3, dz3, NC, g.w3, g.b3, dh2);
    relu_drop_backward(dh2, c.z2, c.m2);
    dense_backward(c.h1, H1, w.w2, dh2, H2, g.w2, g.b2, dh1);
    relu_drop_backward(dh1, c.z1, c.m1);
    dense_backward(c.h0, D, w.w1, dh1, H1, g.w1, g.b1, dh0);
    relu_drop_backward(dh0, c.conv_z, c.m0);

    for (int i = 0; i < N; ++i) {
        const T* x = &c.x[static_cast<std::size_t>(i) * m.rows * C];
        const T* dz = &dh0[static_cast<std::size_t>(i) * D];
        for (int r = 0; r < CR; ++r) {
            for (int col = 0; col < CC; ++col) {
                const T* dzp = dz + (static_cast<std::size_t>(r) * CC + col) * F;
                for (int f = 0; f < F; ++f) {
                    const T gv = dzp[f];
                    if (gv == T(0)) continue;
                    g.conv_b[f] += gv;
                    T* gw = &g.conv_w[static_cast<std::size_t>(f) * k2];
                    for (int dr = 0; dr < K; ++dr)
                        for (int dc = 0; dc < K; ++dc)
                            gw[dr * K + dc] += gv * x[(r + dr) * C + col + dc];
                }
            }
        }
    }

    // d/dw of l2 * sum(w^2) on the regularized kernels.
    const T two_l2 = static_cast<T>(2.0 * cfg.l2);
    if (two_l2 != T(0)) {
        for (std::size_t p = 0; p < w.conv_w.size(); ++p) g.conv_w[p] += two_l2 * w.conv_w[p];
        for (std::size_t p = 0; p < w.w1.size(); ++p) g.w1[p] += two_l2 * w.w1[p];
        for (std::size_t p = 0; p < w.w2.size(); ++p) g.w2[p] += two_l2 * w.w2[p];
    }
    return loss;
}

// ---- evaluation -----------------------------------------------------------

struct Evaluation {
    ConfusionMatrix confusion;  // rows = true class, cols = predicted, 0-based
    std::vector<double> f1;     // one-vs-rest per class, shared with the labeler
    double macro_f1 = 0.0;      // unweighted mean
};

inline Evaluation summarize_predictions(const std::vector<int>& truth,
                                        const std::vector<int>& predicted, int num_classes) {
    if (truth.empty() || truth.size() != predicted.size())
        throw InvalidArgument("summarize_predictions: label lists empty or mismatched");
    Evaluation ev;
    ev.confusion = ConfusionMatrix(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 1 || truth[i] > num_classes || predicted[i] < 1 || predicted[i] > num_classes)
            throw InvalidArgument("summarize_predictions: label outside 1.." +
                                  std::to_string(num_classes));
        ev.confusion.at(truth[i] - 1, predicted[i] - 1) += 1;
    }
    ev.f1 = per_class_f1(ev.confusion);
    double sum = 0.0;
    for (double v : ev.f1) sum += v;
    ev.macro_f1 = sum / ev.f1.size();
    return ev;
}

// Argmax class labels (1-based) under eval-mode forward passes.
template <typename T>
std::vector<int> predict(const ModelState<T>& m, const std::vector<InputMatrix>& set,
                         int batch_size = 32) {
    if (set.empty()) throw InvalidArgument("predict: empty set");
    if (batch_size < 1) throw InvalidArgument("predict: batch size must be positive");
    const int NC = m.config.num_classes;
    std::vector<int> out;
    out.reserve(set.size());
    std::vector<const InputMatrix*> batch;
    detail::ForwardCache<T> cache;
    for (std::size_t from = 0; from < set.size(); from += batch_size) {
        const std::size_t to = std::min(set.size(), from + batch_size);
        batch.clear();
        for (std::size_t i = from; i < to; ++i) batch.push_back(&set[i]);
        detail::forward_core(m, batch, RunMode::kEval, nullptr, cache);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const T* p = &cache.probs[i * NC];
            int best = 0;
            for (int j = 1; j < NC; ++j)
                if (p[j] > p[best]) best = j;
            out.push_back(best + 1);
        }
    }
    return out;
}

template <typename T>
Evaluation evaluate(const ModelState<T>& m, const std::vector<InputMatrix>& test,
                    int batch_size = 32) {
    std::vector<int> truth;
    truth.reserve(test.size());
    for (const InputMatrix& in : test) truth.push_back(detail::checked_label(in, m.config.num_classes) + 1);
    return summarize_predictions(truth, predict(m, test, batch_size), m.config.num_classes);
}

// ---- Adam + training loop -------------------------------------------------

namespace detail {

template <typename T>
struct AdamState {
    Weights<T> m, v;
    long long t = 0;
};

template <typename T>
void adam_tensor(std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m, std::vector<T>& v,
                 double lr, double beta1, double beta2, double epsilon, double bc1, double bc2) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
        const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + epsilon));
    }
}

template <typename T>
void adam_step(Weights<T>& w, const Weights<T>& g, AdamState<T>& st, double lr, double beta1,
               double beta2, double epsilon, bool dense_only) {
    ++st.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    if (!dense_only) {
        adam_tensor(w.conv_w, g.conv_w, st.m.conv_w, st.v.conv_w, lr, beta1, beta2, epsilon, bc1, bc2);
        adam_tensor(w.conv_b, g.conv_b, st.m.conv_b, st.v.conv_b, lr, beta1, beta2, epsilon, bc1, bc2);
    }
    adam_tensor(w.w1, g.w1, st.m.w1, st.v.w1, lr, beta1, beta2, epsilon, bc1, bc2);
    adam_tensor(w.b1, g.b1, st.m.b1, st.v.b1, lr, beta1, beta2, epsilon, bc1, bc2);
    adam_tensor(w.w2, g.w2, st.m.w2, st.v.w2, lr, beta1, beta2, epsilon, bc1, bc2);
    adam_tensor(w.b2, g.b2, st.m.b2, st.v.b2, lr, beta1, beta2, epsilon, bc1, bc2);
    adam_tensor(w.w3, g.w3, st.m.w3, st.v.w3, lr, beta1, beta2, epsilon, bc1, bc2);
    adam_tensor(w.b3, g.b3, st.m.b3, st.v.b3, lr, beta1, beta2, epsilon, bc1, bc2);
}

template <typename T>
EpochStats validation_stats(const ModelState<T>& m, const std::vector<InputMatrix>& val,
                            int batch_size) {
    const int NC = m.config.num_classes;
    double ce = 0.0;
    ConfusionMatrix cm(NC);
    std::vector<const InputMatrix*> batch;
    ForwardCache<T> cache;
    for (std::size_t from = 0; from < val.size(); from += batch_size) {
        const std::size_t to = std::min(val.size(), from + static_cast<std::size_t>(batch_size));
        batch.clear();
        for (std::size_t i = from; i < to; ++i) batch.push_back(&val[i]);
        forward_core(m, batch, RunMode::kEval, nullptr, cache);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const int y = checked_label(*batch[i], NC);
            const T* p = &cache.probs[i * NC];
            ce -= std::log(std::max(static_cast<double>(p[y]), 1e-300));
            int best = 0;
            for (int j = 1; j < NC; ++j)
                if (p[j] > p[best]) best = j;
            cm.at(y, best) += 1;
        }
    }
    EpochStats s;
    s.val_loss = ce / val.size() + l2_penalty(m);
    const std::vector<double> f1 = per_class_f1(cm);
    double sum = 0.0;
    for (double v : f1) sum += v;
    s.val_macro_f1 = sum / f1.size();
    return s;
}

// One seeded pass over the training set: shuffle, then one Adam update per
// mini-batch.  Returns the example-weighted mean batch loss.
template <typename T>
double train_epoch(ModelState<T>& m, const std::vector<InputMatrix>& train_set,
                   std::vector<std::size_t>& order, int batch_size, double lr, double beta1,
                   double beta2, double epsilon, bool dense_only, std::mt19937_64& rng,
                   AdamState<T>& adam, Weights<T>& grads) {
    fisher_yates(order, rng);
    double loss_sum = 0.0;
    std::vector<const InputMatrix*> batch;
    for (std::size_t from = 0; from < order.size(); from += batch_size) {
        const std::size_t to = std::min(order.size(), from + static_cast<std::size_t>(batch_size));
        batch.clear();
        for (std::size_t i = from; i < to; ++i) batch.push_back(&train_set[order[i]]);
        const double loss = loss_and_grads(m, batch, RunMode::kTrain, &rng, &grads);
        adam_step(m.weights, grads, adam, lr, beta1, beta2, epsilon, dense_only);
        loss_sum += loss * batch.size();
    }
    return loss_sum / order.size();
}

}  // namespace detail

// Adam training with early stopping on validation loss; the returned weights
// are the snapshot with the highest validation macro F1 (earliest on ties) --
// model selection is deliberately a separate rule from stopping.
template <typename T>
ModelState<T> train(const ModelState<T>& init, const std::vector<InputMatrix>& train_set,
                    const std::vector<InputMatrix>& val_set, const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty())
        throw InvalidArgument("train: training and validation sets must be nonempty");
    if (cfg.batch_size < 1 || cfg.patience < 1 || cfg.max_epochs < 1)
        throw InvalidArgument("train: batch size, patience and max epochs must be >= 1");

    ModelState<T> model = init;
    detail::AdamState<T> adam;
    detail::zeros_like(model.weights, adam.m);
    detail::zeros_like(model.weights, adam.v);
    Weights<T> grads;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Weights<T> best_weights = model.weights;
    double best_f1 = -1.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int stall = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double train_loss =
            detail::train_epoch(model, train_set, order, cfg.batch_size, cfg.learning_rate,
                                cfg.beta1, cfg.beta2, cfg.epsilon, false, rng, adam, grads);
        EpochStats stats = detail::validation_stats(model, val_set, cfg.batch_size);
        stats.train_loss = train_loss;
        model.history.push_back(stats);

        if (stats.val_macro_f1 > best_f1) {
            best_f1 = stats.val_macro_f1;
            best_weights = model.weights;
        }
        if (stats.val_loss < best_val_loss) {
            best_val_loss = stats.val_loss;
            stall = 0;
        } else if (++stall >= cfg.patience) {
            break;
        }
    }
    model.weights = std::move(best_weights);
    return model;
}

// Learning rate of the slanted triangular schedule at a (possibly fractional)
// epoch in [0, total_epochs].  Written as interpolation so the three anchors
// are hit exactly.
inline double finetune_lr(const FinetuneConfig& cfg, double epoch) {
    if (epoch <= cfg.peak_epoch) {
        const double t = epoch / cfg.peak_epoch;
        return cfg.start_lr * (1.0 - t) + cfg.peak_lr * t;
    }
    const double t = (epoch - cfg.peak_epoch) / (cfg.total_epochs - cfg.peak_epoch);
    return cfg.peak_lr * (1.0 - t) + cfg.end_lr * t;
}

// Dense-only fine-tuning under the triangular schedule; conv tensors are
// never touched (neither weights nor optimizer state), so they stay
// bit-identical to the base model.  Snapshot selection mirrors train().
template <typename T>
ModelState<T> finetune(const ModelState<T>& base, const std::vector<InputMatrix>& tune_set,
                       const std::vector<InputMatrix>& val_set, const FinetuneConfig& cfg) {
    if (tune_set.empty() || val_set.empty())
        throw InvalidArgument("finetune: tune and validation sets must be nonempty");
    if (cfg.peak_epoch < 1 || cfg.peak_epoch >= cfg.total_epochs)
        throw InvalidArgument("finetune: need 1 <= peak epoch < total epochs");
    if (cfg.batch_size < 1) throw InvalidArgument("finetune: batch size must be >= 1");

    ModelState<T> model = base;
    detail::AdamState<T> adam;
    detail::zeros_like(model.weights, adam.m);
    detail::zeros_like(model.weights, adam.v);
    Weights<T> grads;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(tune_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Weights<T> best_weights = model.weights;
    double best_f1 = -1.0;
    for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        const double lr = finetune_lr(cfg, epoch);
        const double train_loss =
            detail::train_epoch(model, tune_set, order, cfg.batch_size, lr, kAdamBeta1, kAdamBeta2,
                                kAdamEpsilon, true, rng, adam, grads);
        EpochStats stats = detail::validation_stats(model, val_set, cfg.batch_size);
        stats.train_loss = train_loss;
        model.history.push_back(stats);
        if (stats.val_macro_f1 > best_f1) {
            best_f1 = stats.val_macro_f1;
            best_weights = model.weights;
        }
    }
    model.weights = std::move(best_weights);
    return model;
}

// ---- checkpoints ----------------------------------------------------------

// Native-endian binary container.  The scalar width is recorded so a
// float-trained model cannot be silently reloaded at the wrong precision;
// weights round-trip bit-exactly.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline constexpr char kCheckpointMagic[9] = "IMUAUGNN";

template <typename P>
void write_pod(std::ofstream& out, const P& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(P));
}

template <typename P>
P read_pod(std::ifstream& in, const std::string& path) {
    P v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(P));
    if (!in) throw DataError("checkpoint " + path + ": truncated file");
    return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ModelState<T>& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(detail::kCheckpointMagic, 8);
    detail::write_pod(out, kCheckpointVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(sizeof(T)));
    detail::write_pod(out, static_cast<std::int32_t>(m.config.conv_filters));
    detail::write_pod(out, static_cast<std::int32_t>(m.config.kernel));
    detail::write_pod(out, static_cast<std::int32_t>(m.config.dense1));
    detail::write_pod(out, static_cast<std::int32_t>(m.config.dense2));
    detail::write_pod(out, static_cast<std::int32_t>(m.config.num_classes));
    detail::write_pod(out, m.config.dropout_rate);
    detail::write_pod(out, m.config.l2);
    detail::write_pod(out, static_cast<std::int32_t>(m.rows));
    detail::write_pod(out, static_cast<std::int32_t>(m.cols));
    detail::write_pod(out, static_cast<std::uint64_t>(m.history.size()));
    for (const EpochStats& h : m.history) {
        detail::write_pod(out, h.train_loss);
        detail::write_pod(out, h.val_loss);
        detail::write_pod(out, h.val_macro_f1);
    }
    for_each_tensor(m.weights, [&](const std::vector<T>& t) {
        detail::write_pod(out, static_cast<std::uint64_t>(t.size()));
        out.write(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T));
    });
    if (!out) throw DataError("cannot write checkpoint " + path);
}

template <typename T = float>
ModelState<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, detail::kCheckpointMagic))
        throw DataError("checkpoint " + path + ": bad magic");
    const auto version = detail::read_pod<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw DataError("checkpoint " + path + ": unsupported version " + std::to_string(version));
    const auto scalar = detail::read_pod<std::uint32_t>(in, path);
    if (scalar != sizeof(T))
        throw DataError("checkpoint " + path + ": stores " + std::to_string(scalar) +
                        "-byte scalars, loader expects " + std::to_string(sizeof(T)));

    ModelState<T> m;
    m.config.conv_filters = detail::read_pod<std::int32_t>(in, path);
    m.config.kernel = detail::read_pod<std::int32_t>(in, path);
    m.config.dense1 = detail::read_pod<std::int32_t>(in, path);
    m.config.dense2 = detail::read_pod<std::int32_t>(in, path);
    m.config.num_classes = detail::read_pod<std::int32_t>(in, path);
    m.config.dropout_rate = detail::read_pod<double>(in, path);
    m.config.l2 = detail::read_pod<double>(in, path);
    m.rows = detail::read_pod<std::int32_t>(in, path);
    m.cols = detail::read_pod<std::int32_t>(in, path);
    detail::validate_model_config(m.config);
    if (m.rows < m.config.kernel || m.cols < m.config.kernel)
        throw DataError("checkpoint " + path + ": kernel does not fit the stored input shape");
    const auto nhist = detail::read_pod<std::uint64_t>(in, path);
    m.history.resize(nhist);
    for (EpochStats& h : m.history) {
        h.train_loss = detail::read_pod<double>(in, path);
        h.val_loss = detail::read_pod<double>(in, path);
        h.val_macro_f1 = detail::read_pod<double>(in, path);
    }

    const std::size_t expected[8] = {
        static_cast<std::size_t>(m.config.conv_filters) * m.config.kernel * m.config.kernel,
        static_cast<std::size_t>(m.config.conv_filters),
        static_cast<std::size_t>(m.flat_dim()) * m.config.dense1,
        static_cast<std::size_t>(m.config.dense1),
        static_cast<std::size_t>(m.config.dense1) * m.config.dense2,
        static_cast<std::size_t>(m.config.dense2),
        static_cast<std::size_t>(m.config.dense2) * m.config.num_classes,
        static_cast<std::size_t>(m.config.num_classes)};
    int idx = 0;
    for_each_tensor(m.weights, [&](std::vector<T>& t) {
        const auto count = detail::read_pod<std::uint64_t>(in, path);
        if (count != expected[idx])
            throw DataError("checkpoint " + path + ": tensor size mismatch");
        t.resize(count);
        in.read(reinterpret_cast<char*>(t.data()), count * sizeof(T));
        if (!in) throw DataError("checkpoint " + path + ": truncated file");
        ++idx;
    });
    return m;
}

inline void save_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,train_loss,val_loss,val_macro_f1\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out << (i + 1) << ',' << detail::format_g17(history[i].train_loss) << ','
            << detail::format_g17(history[i].val_loss) << ','
            << detail::format_g17(history[i].val_macro_f1) << '\n';
    if (!out) throw DataError("cannot write " + path);
}

}  // namespace imuaug
