#include "uwie/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace uwie::ops {

namespace {
constexpr std::size_t kParallelCutoff = 2048;  // skip thread fan-out for tiny tensors
}

template <typename T>
void conv2d_forward(const T* in, int cin, int h, int w, const T* weight, int cout, int k,
                    int stride, int pad, const T* bias, T* out) {
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(w, k, stride, pad);
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    const std::size_t work = static_cast<std::size_t>(cout) * cin * oplane * k * k;

#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int co = 0; co < cout; ++co) {
        T* op = out + static_cast<std::size_t>(co) * oplane;
        const T b = bias ? bias[co] : T(0);
        for (std::size_t i = 0; i < oplane; ++i) op[i] = b;

        for (int ci = 0; ci < cin; ++ci) {
            const T* ip = in + static_cast<std::size_t>(ci) * h * w;
            const T* wk = weight + (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wk[ky * k + kx];
                    if (stride == 1) {
                        const int x0 = std::max(0, pad - kx);
                        const int x1 = std::min(ow, w + pad - kx);
                        if (x1 <= x0) continue;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            const T* irow = ip + static_cast<std::size_t>(iy) * w + (x0 + kx - pad);
                            T* orow = op + static_cast<std::size_t>(oy) * ow + x0;
                            const int len = x1 - x0;
                            for (int x = 0; x < len; ++x) orow[x] += wv * irow[x];
                        }
                    } else {
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= w) continue;
                                op[static_cast<std::size_t>(oy) * ow + ox] +=
                                    wv * ip[static_cast<std::size_t>(iy) * w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* dout, int cout, const T* weight, int cin, int h, int w, int k,
                           int stride, int pad, T* din) {
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(w, k, stride, pad);
    const std::size_t work = static_cast<std::size_t>(cout) * cin * oh * ow * k * k;

    // Gather formulation: each input plane is owned by one thread.
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int ci = 0; ci < cin; ++ci) {
        T* dp = din + static_cast<std::size_t>(ci) * h * w;
        for (int co = 0; co < cout; ++co) {
            const T* gp = dout + static_cast<std::size_t>(co) * oh * ow;
            const T* wk = weight + (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wk[ky * k + kx];
                    if (stride == 1) {
                        // ix maps to ox = ix - kx + pad
                        const int ix0 = std::max(0, kx - pad);
                        const int ix1 = std::min(w, ow + kx - pad);
                        if (ix1 <= ix0) continue;
                        for (int iy = 0; iy < h; ++iy) {
                            const int oy = iy - ky + pad;
                            if (oy < 0 || oy >= oh) continue;
                            T* drow = dp + static_cast<std::size_t>(iy) * w + ix0;
                            const T* grow = gp + static_cast<std::size_t>(oy) * ow + (ix0 - kx + pad);
                            const int len = ix1 - ix0;
                            for (int x = 0; x < len; ++x) drow[x] += wv * grow[x];
                        }
                    } else {
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= w) continue;
                                dp[static_cast<std::size_t>(iy) * w + ix] +=
                                    wv * gp[static_cast<std::size_t>(oy) * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_params(const T* dout, int cout, const T* in, int cin, int h, int w, int k,
                            int stride, int pad, T* dweight, T* dbias) {
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(w, k, stride, pad);
    const std::size_t work = static_cast<std::size_t>(cout) * cin * oh * ow * k * k;

#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int co = 0; co < cout; ++co) {
        const T* gp = dout + static_cast<std::size_t>(co) * oh * ow;
        if (dbias) {
            T acc = T(0);
            for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) acc += gp[i];
            dbias[co] += acc;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const T* ip = in + static_cast<std::size_t>(ci) * h * w;
            T* dw = dweight + (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    T acc = T(0);
                    if (stride == 1) {
                        const int x0 = std::max(0, pad - kx);
                        const int x1 = std::min(ow, w + pad - kx);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy + ky - pad;
                            if (iy < 0 || iy >= h || x1 <= x0) continue;
                            const T* irow = ip + static_cast<std::size_t>(iy) * w + (x0 + kx - pad);
                            const T* grow = gp + static_cast<std::size_t>(oy) * ow + x0;
                            const int len = x1 - x0;
                            for (int x = 0; x < len; ++x) acc += grow[x] * irow[x];
                        }
                    } else {
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= w) continue;
                                acc += gp[static_cast<std::size_t>(oy) * ow + ox] *
                                       ip[static_cast<std::size_t>(iy) * w + ix];
                            }
                        }
                    }
                    dw[ky * k + kx] += acc;
                }
            }
        }
    }
}

template <typename T>
void leaky_relu_forward(const T* in, std::size_t n, T slope, T* out) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const T v = in[i];
        out[i] = v > T(0) ? v : slope * v;
    }
}

template <typename T>
void leaky_relu_backward(const T* in, const T* dout, std::size_t n, T slope, T* din) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        din[i] += dout[i] * (in[i] > T(0) ? T(1) : slope);
}

template <typename T>
void sigmoid_forward(const T* in, std::size_t n, T* out) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        out[i] = T(1) / (T(1) + std::exp(-in[i]));
}

template <typename T>
void sigmoid_backward(const T* out, const T* dout, std::size_t n, T* din) {
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        din[i] += dout[i] * out[i] * (T(1) - out[i]);
}

template <typename T>
void max_pool2_forward(const T* in, int c, int h, int w, T* out, int* argmax) {
    const int oh = h / 2, ow = w / 2;
    const std::size_t n = static_cast<std::size_t>(c) * oh * ow;
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(n); ++idx) {
        const int ci = static_cast<int>(idx / (static_cast<std::size_t>(oh) * ow));
        const int rem = static_cast<int>(idx % (static_cast<std::size_t>(oh) * ow));
        const int oy = rem / ow, ox = rem % ow;
        const T* ip = in + (static_cast<std::size_t>(ci) * h + 2 * oy) * w + 2 * ox;
        T best = ip[0];
        int arg = 0;
        const T cands[3] = {ip[1], ip[w], ip[w + 1]};
        for (int j = 0; j < 3; ++j)
            if (cands[j] > best) {
                best = cands[j];
                arg = j + 1;
            }
        out[idx] = best;
        argmax[idx] = arg;
    }
}

template <typename T>
void max_pool2_backward(const T* dout, int c, int h, int w, const int* argmax, T* din) {
    const int oh = h / 2, ow = w / 2;
    const std::size_t n = static_cast<std::size_t>(c) * oh * ow;
    // Windows are disjoint, so scattering is race-free.
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(n); ++idx) {
        const int ci = static_cast<int>(idx / (static_cast<std::size_t>(oh) * ow));
        const int rem = static_cast<int>(idx % (static_cast<std::size_t>(oh) * ow));
        const int oy = rem / ow, ox = rem % ow;
        const int arg = argmax[idx];
        const int dy = arg / 2, dx = arg % 2;
        din[(static_cast<std::size_t>(ci) * h + 2 * oy + dy) * w + 2 * ox + dx] += dout[idx];
    }
}

template <typename T>
void upsample2_forward(const T* in, int c, int h, int w, T* out) {
    const int oh = h * 2, ow = w * 2;
    const std::size_t n = static_cast<std::size_t>(c) * oh * ow;
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(n); ++idx) {
        const int ci = static_cast<int>(idx / (static_cast<std::size_t>(oh) * ow));
        const int rem = static_cast<int>(idx % (static_cast<std::size_t>(oh) * ow));
        const int oy = rem / ow, ox = rem % ow;
        out[idx] = in[(static_cast<std::size_t>(ci) * h + oy / 2) * w + ox / 2];
    }
}

template <typename T>
void upsample2_backward(const T* dout, int c, int h, int w, T* din) {
    const int oh = h * 2, ow = w * 2;
    const std::size_t n = static_cast<std::size_t>(c) * h * w;
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(n); ++idx) {
        const int ci = static_cast<int>(idx / (static_cast<std::size_t>(h) * w));
        const int rem = static_cast<int>(idx % (static_cast<std::size_t>(h) * w));
        const int iy = rem / w, ix = rem % w;
        const T* gp = dout + static_cast<std::size_t>(ci) * oh * ow;
        T acc = T(0);
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                acc += gp[static_cast<std::size_t>(2 * iy + dy) * ow + 2 * ix + dx];
        din[idx] += acc;
    }
}

template <typename T>
void linear_forward(const T* in, int n_in, const T* weight, int n_out, const T* bias, T* out) {
#pragma omp parallel for schedule(static) if (static_cast<std::size_t>(n_in) * n_out > kParallelCutoff)
    for (int o = 0; o < n_out; ++o) {
        const T* wrow = weight + static_cast<std::size_t>(o) * n_in;
        T acc = bias ? bias[o] : T(0);
        for (int i = 0; i < n_in; ++i) acc += wrow[i] * in[i];
        out[o] = acc;
    }
}

template <typename T>
void linear_backward(const T* in, int n_in, const T* weight, int n_out, const T* dout, T* din,
                     T* dweight, T* dbias) {
    if (din) {
        for (int i = 0; i < n_in; ++i) {
            T acc = T(0);
            for (int o = 0; o < n_out; ++o) acc += weight[static_cast<std::size_t>(o) * n_in + i] * dout[o];
            din[i] += acc;
        }
    }
    if (dweight) {
        for (int o = 0; o < n_out; ++o) {
            T* dwrow = dweight + static_cast<std::size_t>(o) * n_in;
            const T g = dout[o];
            for (int i = 0; i < n_in; ++i) dwrow[i] += g * in[i];
        }
    }
    if (dbias)
        for (int o = 0; o < n_out; ++o) dbias[o] += dout[o];
}

template <typename T>
void global_avg_pool_forward(const T* in, int c, int h, int w, T* out) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci) {
        const T* ip = in + static_cast<std::size_t>(ci) * plane;
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i) acc += ip[i];
        out[ci] = acc / static_cast<T>(plane);
    }
}

template <typename T>
void global_avg_pool_backward(const T* dout, int c, int h, int w, T* din) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci) {
        const T g = dout[ci] / static_cast<T>(plane);
        T* dp = din + static_cast<std::size_t>(ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) dp[i] += g;
    }
}

template <typename T>
void softmax_forward(const T* in, int n, T* out) {
    T mx = in[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    T sum = T(0);
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < n; ++i) out[i] /= sum;
}

template <typename T>
void softmax_backward(const T* out, const T* dout, int n, T* din) {
    T dot = T(0);
    for (int i = 0; i < n; ++i) dot += dout[i] * out[i];
    for (int i = 0; i < n; ++i) din[i] += out[i] * (dout[i] - dot);
}

template <typename T>
T mse_value(const T* pred, const T* target, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<T>(n);
}

template <typename T>
void mse_backward(const T* pred, const T* target, std::size_t n, T g, T* dpred, T* dtarget) {
    const T scale = T(2) * g / static_cast<T>(n);
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const T d = scale * (pred[i] - target[i]);
        if (dpred) dpred[i] += d;
        if (dtarget) dtarget[i] -= d;
    }
}

template <typename T>
T cross_entropy_value(const T* probs, const T* onehot, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i)
        if (onehot[i] != T(0))
            acc -= onehot[i] * std::log(std::max(probs[i], static_cast<T>(kProbFloor)));
    return acc;
}

template <typename T>
void cross_entropy_backward(const T* probs, const T* onehot, int n, T g, T* dprobs, T* donehot) {
    for (int i = 0; i < n; ++i) {
        const T p = std::max(probs[i], static_cast<T>(kProbFloor));
        if (dprobs && onehot[i] != T(0) && probs[i] > static_cast<T>(kProbFloor))
            dprobs[i] -= g * onehot[i] / p;
        if (donehot) donehot[i] -= g * std::log(p);
    }
}

template <typename T>
T neg_entropy_value(const T* probs, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i)
        if (probs[i] > T(0)) acc += probs[i] * std::log(probs[i]);
    return acc;
}

template <typename T>
void neg_entropy_backward(const T* probs, int n, T g, T* dprobs) {
    for (int i = 0; i < n; ++i)
        if (probs[i] > T(0)) dprobs[i] += g * (std::log(probs[i]) + T(1));
}

// Explicit instantiations: float for training, double for verification.
#define UWIE_INSTANTIATE_OPS(T)                                                                      \
    template void conv2d_forward<T>(const T*, int, int, int, const T*, int, int, int, int,          \
                                    const T*, T*);                                                   \
    template void conv2d_backward_input<T>(const T*, int, const T*, int, int, int, int, int, int,   \
                                           T*);                                                      \
    template void conv2d_backward_params<T>(const T*, int, const T*, int, int, int, int, int, int,  \
                                            T*, T*);                                                 \
    template void leaky_relu_forward<T>(const T*, std::size_t, T, T*);                              \
    template void leaky_relu_backward<T>(const T*, const T*, std::size_t, T, T*);                   \
    template void sigmoid_forward<T>(const T*, std::size_t, T*);                                    \
    template void sigmoid_backward<T>(const T*, const T*, std::size_t, T*);                         \
    template void max_pool2_forward<T>(const T*, int, int, int, T*, int*);                          \
    template void max_pool2_backward<T>(const T*, int, int, int, const int*, T*);                   \
    template void upsample2_forward<T>(const T*, int, int, int, T*);                                \
    template void upsample2_backward<T>(const T*, int, int, int, T*);                               \
    template void linear_forward<T>(const T*, int, const T*, int, const T*, T*);                    \
    template void linear_backward<T>(const T*, int, const T*, int, const T*, T*, T*, T*);           \
    template void global_avg_pool_forward<T>(const T*, int, int, int, T*);                          \
    template void global_avg_pool_backward<T>(const T*, int, int, int, T*);                         \
    template void softmax_forward<T>(const T*, int, T*);                                            \
    template void softmax_backward<T>(const T*, const T*, int, T*);                                 \
    template T mse_value<T>(const T*, const T*, std::size_t);                                       \
    template void mse_backward<T>(const T*, const T*, std::size_t, T, T*, T*);                      \
    template T cross_entropy_value<T>(const T*, const T*, int);                                     \
    template void cross_entropy_backward<T>(const T*, const T*, int, T, T*, T*);                    \
    template T neg_entropy_value<T>(const T*, int);                                                 \
    template void neg_entropy_backward<T>(const T*, int, T, T*);

UWIE_INSTANTIATE_OPS(float)
UWIE_INSTANTIATE_OPS(double)

#undef UWIE_INSTANTIATE_OPS

}  // namespace uwie::ops
