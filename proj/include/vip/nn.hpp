#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vip/errors.hpp"
#include "vip/tensor.hpp"

namespace vip {

enum class Activation : std::uint8_t { relu, identity };

template <typename T>
inline T apply_act(T x, Activation act) {
    return act == Activation::relu ? (x > T(0) ? x : T(0)) : x;
}

// 2-d convolution, "same" zero padding, stride 1, kernel anchored top-left:
//   out[k',i,j] = act( sum_k sum_s sum_t kernels[k',k,s,t] * input[k,i+s,j+t] + bias[k'] )
// with out-of-range input treated as zero. Sums accumulate in 64-bit even for
// 32-bit tensors, which keeps finite-difference checks stable.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& kernels,
                          const TensorT<T>& bias, Activation act) {
    if (input.rank() != 3 || kernels.rank() != 4)
        throw ShapeError("conv2d: input must be CxHxW, kernels C_out x C_in x r x r");
    const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t c_out = kernels.dim(0), r = kernels.dim(2);
    if (kernels.dim(1) != c_in)
        throw ShapeError("conv2d: kernel input channels (" + std::to_string(kernels.dim(1)) +
                         ") do not match input channels (" + std::to_string(c_in) + ")");
    if (kernels.dim(3) != r) throw ShapeError("conv2d: kernels must be square");
    if (r < 1) throw ShapeError("conv2d: kernel size must be >= 1");
    if (bias.size() != c_out) throw ShapeError("conv2d: bias length must equal output channels");

    TensorT<T> out({c_out, h, w});
    const std::size_t hw = h * w;
    std::vector<double> plane(hw);
    for (std::size_t ko = 0; ko < c_out; ++ko) {
        std::fill(plane.begin(), plane.end(), static_cast<double>(bias[ko]));
        for (std::size_t k = 0; k < c_in; ++k) {
            const T* in_plane = &input.data[k * hw];
            const T* ker = &kernels.data[(ko * c_in + k) * r * r];
            if (r == 2 && w >= 2) {
                // Fused 2x2 stencil: one pass per input channel.
                const double k00 = ker[0], k01 = ker[1], k10 = ker[2], k11 = ker[3];
                for (std::size_t i = 0; i < h; ++i) {
                    const T* row0 = in_plane + i * w;
                    double* out_row = plane.data() + i * w;
                    if (i + 1 < h) {
                        const T* row1 = row0 + w;
                        for (std::size_t j = 0; j < w - 1; ++j)
                            out_row[j] += k00 * static_cast<double>(row0[j]) +
                                          k01 * static_cast<double>(row0[j + 1]) +
                                          k10 * static_cast<double>(row1[j]) +
                                          k11 * static_cast<double>(row1[j + 1]);
                        out_row[w - 1] += k00 * static_cast<double>(row0[w - 1]) +
                                          k10 * static_cast<double>(row1[w - 1]);
                    } else {  // bottom edge: lower taps fall on zero padding
                        for (std::size_t j = 0; j < w - 1; ++j)
                            out_row[j] += k00 * static_cast<double>(row0[j]) +
                                          k01 * static_cast<double>(row0[j + 1]);
                        out_row[w - 1] += k00 * static_cast<double>(row0[w - 1]);
                    }
                }
                continue;
            }
            // General case: one shifted multiply-add pass per kernel tap.
            for (std::size_t s = 0; s < r; ++s) {
                if (s >= h) break;
                const std::size_t rows = h - s;
                for (std::size_t t = 0; t < r; ++t) {
                    if (t >= w) break;
                    const double wv = static_cast<double>(ker[s * r + t]);
                    const std::size_t cols = w - t;
                    for (std::size_t i = 0; i < rows; ++i) {
                        const T* in_row = in_plane + (i + s) * w + t;
                        double* out_row = plane.data() + i * w;
                        for (std::size_t j = 0; j < cols; ++j)
                            out_row[j] += wv * static_cast<double>(in_row[j]);
                    }
                }
            }
        }
        T* out_plane = &out.data[ko * hw];
        for (std::size_t idx = 0; idx < hw; ++idx)
            out_plane[idx] = apply_act(static_cast<T>(plane[idx]), act);
    }
    return out;
}

// Accumulates gradients for conv2d_forward. `output` is the post-activation
// forward result (the ReLU mask is recovered from it). d_input may be null
// when the input is data rather than an upstream activation.
template <typename T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernels, Activation act,
                     const TensorT<T>& output, const TensorT<T>& d_output, TensorT<T>* d_input,
                     TensorT<T>& d_kernels, TensorT<T>& d_bias) {
    const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t c_out = kernels.dim(0), r = kernels.dim(2);
    const std::size_t hw = h * w;
    std::vector<double> dz(hw);
    for (std::size_t ko = 0; ko < c_out; ++ko) {
        const T* out_plane = &output.data[ko * hw];
        const T* dout_plane = &d_output.data[ko * hw];
        double db = 0.0;
        for (std::size_t idx = 0; idx < hw; ++idx) {
            double v = static_cast<double>(dout_plane[idx]);
            if (act == Activation::relu && !(out_plane[idx] > T(0))) v = 0.0;
            dz[idx] = v;
            db += v;
        }
        d_bias[ko] += static_cast<T>(db);
        for (std::size_t k = 0; k < c_in; ++k) {
            const T* in_plane = &input.data[k * hw];
            T* din_plane = d_input ? &d_input->data[k * hw] : nullptr;
            const T* ker = &kernels.data[(ko * c_in + k) * r * r];
            T* dker = &d_kernels.data[(ko * c_in + k) * r * r];
            if (r == 2 && w >= 2) {
                // Kernel gradient: the four tap dots in a single pass.
                double a00 = 0, a01 = 0, a10 = 0, a11 = 0;
                for (std::size_t i = 0; i < h; ++i) {
                    const double* dzr = dz.data() + i * w;
                    const T* row0 = in_plane + i * w;
                    if (i + 1 < h) {
                        const T* row1 = row0 + w;
                        for (std::size_t j = 0; j < w - 1; ++j) {
                            a00 += dzr[j] * static_cast<double>(row0[j]);
                            a01 += dzr[j] * static_cast<double>(row0[j + 1]);
                            a10 += dzr[j] * static_cast<double>(row1[j]);
                            a11 += dzr[j] * static_cast<double>(row1[j + 1]);
                        }
                        a00 += dzr[w - 1] * static_cast<double>(row0[w - 1]);
                        a10 += dzr[w - 1] * static_cast<double>(row1[w - 1]);
                    } else {
                        for (std::size_t j = 0; j < w - 1; ++j) {
                            a00 += dzr[j] * static_cast<double>(row0[j]);
                            a01 += dzr[j] * static_cast<double>(row0[j + 1]);
                        }
                        a00 += dzr[w - 1] * static_cast<double>(row0[w - 1]);
                    }
                }
                dker[0] += static_cast<T>(a00);
                dker[1] += static_cast<T>(a01);
                dker[2] += static_cast<T>(a10);
                dker[3] += static_cast<T>(a11);
                // Input gradient: gather with the flipped kernel.
                if (din_plane) {
                    const double k00 = ker[0], k01 = ker[1], k10 = ker[2], k11 = ker[3];
                    {
                        T* dinr = din_plane;
                        const double* dz0 = dz.data();
                        dinr[0] += static_cast<T>(k00 * dz0[0]);
                        for (std::size_t j = 1; j < w; ++j)
                            dinr[j] += static_cast<T>(k00 * dz0[j] + k01 * dz0[j - 1]);
                    }
                    for (std::size_t i = 1; i < h; ++i) {
                        T* dinr = din_plane + i * w;
                        const double* dz0 = dz.data() + i * w;
                        const double* dzm = dz0 - w;
                        dinr[0] += static_cast<T>(k00 * dz0[0] + k10 * dzm[0]);
                        for (std::size_t j = 1; j < w; ++j)
                            dinr[j] += static_cast<T>(k00 * dz0[j] + k01 * dz0[j - 1] +
                                                      k10 * dzm[j] + k11 * dzm[j - 1]);
                    }
                }
                continue;
            }
            for (std::size_t s = 0; s < r && s < h; ++s) {
                const std::size_t rows = h - s;
                for (std::size_t t = 0; t < r && t < w; ++t) {
                    const std::size_t cols = w - t;
                    double acc0 = 0.0, acc1 = 0.0;
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double* dzr = dz.data() + i * w;
                        const T* inr = in_plane + (i + s) * w + t;
                        std::size_t j = 0;
                        for (; j + 1 < cols; j += 2) {
                            acc0 += dzr[j] * static_cast<double>(inr[j]);
                            acc1 += dzr[j + 1] * static_cast<double>(inr[j + 1]);
                        }
                        if (j < cols) acc0 += dzr[j] * static_cast<double>(inr[j]);
                    }
                    dker[s * r + t] += static_cast<T>(acc0 + acc1);
                    if (din_plane) {
                        const double wv = static_cast<double>(ker[s * r + t]);
                        if (wv != 0.0) {
                            for (std::size_t i = 0; i < rows; ++i) {
                                const double* dzr = dz.data() + i * w;
                                T* dinr = din_plane + (i + s) * w + t;
                                for (std::size_t j = 0; j < cols; ++j)
                                    dinr[j] += static_cast<T>(wv * dzr[j]);
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
struct PoolResult {
    TensorT<T> out;
    std::vector<std::uint32_t> argmax;  // flat index into the pool input, per output cell
};

// General max pooling with explicit window and stride; trailing rows/columns
// not covered by a full window are dropped.
template <typename T>
PoolResult<T> maxpool2d_general(const TensorT<T>& input, std::size_t pool_h, std::size_t pool_w,
                                std::size_t stride_h, std::size_t stride_w) {
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (pool_h == 0 || pool_w == 0 || stride_h == 0 || stride_w == 0)
        throw ConfigError("maxpool2d: pool size and stride must be positive");
    if (h < pool_h || w < pool_w)
        throw ShapeError("maxpool2d: input smaller than pooling window");
    const std::size_t h_out = (h - pool_h) / stride_h + 1;
    const std::size_t w_out = (w - pool_w) / stride_w + 1;
    PoolResult<T> res;
    res.out = TensorT<T>({c, h_out, w_out});
    res.argmax.resize(c * h_out * w_out);
    std::size_t cell = 0;
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < h_out; ++i) {
            for (std::size_t j = 0; j < w_out; ++j, ++cell) {
                const std::size_t y0 = i * stride_h, x0 = j * stride_w;
                T best = input.at(k, y0, x0);
                std::size_t best_idx = (k * h + y0) * w + x0;
                for (std::size_t s = 0; s < pool_h; ++s) {
                    const T* row = &input.data[(k * h + y0 + s) * w + x0];
                    for (std::size_t t = 0; t < pool_w; ++t) {
                        if (row[t] > best) {
                            best = row[t];
                            best_idx = (k * h + y0 + s) * w + x0 + t;
                        }
                    }
                }
                res.out.data[cell] = best;
                res.argmax[cell] = static_cast<std::uint32_t>(best_idx);
            }
        }
    }
    return res;
}

// Square d x d window, stride d.
template <typename T>
PoolResult<T> maxpool2d_forward(const TensorT<T>& input, std::size_t d, std::size_t stride) {
    return maxpool2d_general(input, d, d, stride, stride);
}

// Model-pipeline variant: the window is clamped to the remaining extent so
// degenerate proposal heights (e.g. a 1-row map pooled by 2) reduce over
// whatever is left instead of failing.
template <typename T>
PoolResult<T> maxpool2d_clamped(const TensorT<T>& input, std::size_t d) {
    const std::size_t ph = std::min(d, input.dim(1));
    const std::size_t pw = std::min(d, input.dim(2));
    return maxpool2d_general(input, ph, pw, ph, pw);
}

template <typename T>
void maxpool2d_backward(const PoolResult<T>& pooled, const TensorT<T>& d_output,
                        TensorT<T>& d_input) {
    for (std::size_t cell = 0; cell < pooled.argmax.size(); ++cell)
        d_input.data[pooled.argmax[cell]] += d_output.data[cell];
}

// act(W v + b) with W laid out rows x cols = out x in.
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& v, const TensorT<T>& weight, const TensorT<T>& bias,
                         Activation act) {
    if (weight.rank() != 2 || weight.dim(1) != v.size())
        throw ShapeError("dense: weight columns must equal input length");
    if (bias.size() != weight.dim(0)) throw ShapeError("dense: bias length must equal rows");
    const std::size_t rows = weight.dim(0), cols = weight.dim(1);
    TensorT<T> out({rows});
    for (std::size_t i = 0; i < rows; ++i) {
        const T* wr = &weight.data[i * cols];
        double acc = static_cast<double>(bias[i]);
        for (std::size_t j = 0; j < cols; ++j)
            acc += static_cast<double>(wr[j]) * static_cast<double>(v[j]);
        out[i] = apply_act(static_cast<T>(acc), act);
    }
    return out;
}

template <typename T>
void dense_backward(const TensorT<T>& v, const TensorT<T>& weight, Activation act,
                    const TensorT<T>& output, const TensorT<T>& d_output, TensorT<T>* d_v,
                    TensorT<T>& d_weight, TensorT<T>& d_bias) {
    const std::size_t rows = weight.dim(0), cols = weight.dim(1);
    for (std::size_t i = 0; i < rows; ++i) {
        T dz = d_output[i];
        if (act == Activation::relu && !(output[i] > T(0))) dz = T(0);
        if (dz == T(0)) continue;
        d_bias[i] += dz;
        T* dwr = &d_weight.data[i * cols];
        const T* wr = &weight.data[i * cols];
        for (std::size_t j = 0; j < cols; ++j) {
            dwr[j] += dz * v[j];
            if (d_v) d_v->data[j] += dz * wr[j];
        }
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Non-owning view over the twelve LSTM parameter tensors.
template <typename T>
struct LstmWeightsT {
    const TensorT<T>*W_i, *W_f, *W_c, *W_o;  // L x D
    const TensorT<T>*U_i, *U_f, *U_c, *U_o;  // L x L
    const TensorT<T>*b_i, *b_f, *b_c, *b_o;  // L
};

template <typename T>
struct LstmGradsT {
    TensorT<T>*W_i, *W_f, *W_c, *W_o;
    TensorT<T>*U_i, *U_f, *U_c, *U_o;
    TensorT<T>*b_i, *b_f, *b_c, *b_o;
};

// Gate activations and states for one step, kept for backprop.
template <typename T>
struct LstmStepT {
    std::vector<T> i, f, o, g;  // gates and tanh candidate
    std::vector<T> c, h, tanh_c;
};

template <typename T>
LstmStepT<T> lstm_cell_forward(std::span<const T> q, std::span<const T> h_prev,
                               std::span<const T> c_prev, const LstmWeightsT<T>& w) {
    const std::size_t L = w.W_i->dim(0), D = w.W_i->dim(1);
    if (q.size() != D) throw ShapeError("lstm: input length does not match W columns");
    if (h_prev.size() != L || c_prev.size() != L)
        throw ShapeError("lstm: state length does not match the LSTM dimension");
    for (const TensorT<T>* m : {w.W_f, w.W_c, w.W_o})
        if (m->dim(0) != L || m->dim(1) != D) throw ShapeError("lstm: W shape mismatch");
    for (const TensorT<T>* m : {w.U_i, w.U_f, w.U_c, w.U_o})
        if (m->dim(0) != L || m->dim(1) != L) throw ShapeError("lstm: U shape mismatch");

    // Four partial sums per dot product; fixed order, vectorizer friendly.
    auto dot = [](const T* a, const T* b, std::size_t n) {
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            s0 += static_cast<double>(a[j]) * static_cast<double>(b[j]);
            s1 += static_cast<double>(a[j + 1]) * static_cast<double>(b[j + 1]);
            s2 += static_cast<double>(a[j + 2]) * static_cast<double>(b[j + 2]);
            s3 += static_cast<double>(a[j + 3]) * static_cast<double>(b[j + 3]);
        }
        for (; j < n; ++j) s0 += static_cast<double>(a[j]) * static_cast<double>(b[j]);
        return (s0 + s1) + (s2 + s3);
    };
    auto affine = [&](const TensorT<T>& W, const TensorT<T>& U, const TensorT<T>& b,
                      std::size_t row) {
        return static_cast<double>(b[row]) + dot(&W.data[row * D], q.data(), D) +
               dot(&U.data[row * L], h_prev.data(), L);
    };

    LstmStepT<T> s;
    s.i.resize(L); s.f.resize(L); s.o.resize(L); s.g.resize(L);
    s.c.resize(L); s.h.resize(L); s.tanh_c.resize(L);
    for (std::size_t r = 0; r < L; ++r) {
        s.i[r] = static_cast<T>(sigmoid(affine(*w.W_i, *w.U_i, *w.b_i, r)));
        s.f[r] = static_cast<T>(sigmoid(affine(*w.W_f, *w.U_f, *w.b_f, r)));
        s.g[r] = static_cast<T>(std::tanh(affine(*w.W_c, *w.U_c, *w.b_c, r)));
        s.o[r] = static_cast<T>(sigmoid(affine(*w.W_o, *w.U_o, *w.b_o, r)));
        s.c[r] = s.f[r] * c_prev[r] + s.i[r] * s.g[r];
        s.tanh_c[r] = static_cast<T>(std::tanh(static_cast<double>(s.c[r])));
        s.h[r] = s.o[r] * s.tanh_c[r];
    }
    return s;
}

// One BPTT step. d_h and d_c_in are the gradients flowing into h_t and c_t;
// produces the gradients w.r.t. q_t, h_{t-1}, c_{t-1} and accumulates the
// weight gradients.
template <typename T>
void lstm_cell_backward(std::span<const T> q, std::span<const T> h_prev,
                        std::span<const T> c_prev, const LstmWeightsT<T>& w,
                        const LstmStepT<T>& s, std::span<const T> d_h, std::span<const T> d_c_in,
                        const LstmGradsT<T>& g, std::vector<T>& d_q, std::vector<T>& d_h_prev,
                        std::vector<T>& d_c_prev) {
    const std::size_t L = w.W_i->dim(0), D = w.W_i->dim(1);
    d_q.assign(D, T(0));
    d_h_prev.assign(L, T(0));
    d_c_prev.assign(L, T(0));
    std::vector<T> da_i(L), da_f(L), da_c(L), da_o(L);
    for (std::size_t r = 0; r < L; ++r) {
        const T do_ = d_h[r] * s.tanh_c[r];
        const T dc = d_c_in[r] + d_h[r] * s.o[r] * (T(1) - s.tanh_c[r] * s.tanh_c[r]);
        const T di = dc * s.g[r];
        const T df = dc * c_prev[r];
        const T dg = dc * s.i[r];
        d_c_prev[r] = dc * s.f[r];
        da_i[r] = di * s.i[r] * (T(1) - s.i[r]);
        da_f[r] = df * s.f[r] * (T(1) - s.f[r]);
        da_c[r] = dg * (T(1) - s.g[r] * s.g[r]);
        da_o[r] = do_ * s.o[r] * (T(1) - s.o[r]);
    }
    auto accumulate = [&](const std::vector<T>& da, const TensorT<T>& W, const TensorT<T>& U,
                          TensorT<T>* dW, TensorT<T>* dU, TensorT<T>* db) {
        for (std::size_t r = 0; r < L; ++r) {
            const T a = da[r];
            if (a == T(0)) continue;
            db->data[r] += a;
            T* dwr = &dW->data[r * D];
            const T* wr = &W.data[r * D];
            for (std::size_t j = 0; j < D; ++j) dwr[j] += a * q[j];
            for (std::size_t j = 0; j < D; ++j) d_q[j] += a * wr[j];
            T* dur = &dU->data[r * L];
            const T* ur = &U.data[r * L];
            for (std::size_t j = 0; j < L; ++j) dur[j] += a * h_prev[j];
            for (std::size_t j = 0; j < L; ++j) d_h_prev[j] += a * ur[j];
        }
    };
    accumulate(da_i, *w.W_i, *w.U_i, g.W_i, g.U_i, g.b_i);
    accumulate(da_f, *w.W_f, *w.U_f, g.W_f, g.U_f, g.b_f);
    accumulate(da_c, *w.W_c, *w.U_c, g.W_c, g.U_c, g.b_c);
    accumulate(da_o, *w.W_o, *w.U_o, g.W_o, g.U_o, g.b_o);
}

using LstmWeights = LstmWeightsT<double>;
using LstmGrads = LstmGradsT<double>;
using LstmStep = LstmStepT<double>;

}  // namespace vip
