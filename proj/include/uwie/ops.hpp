#pragma once

#include <cstddef>

namespace uwie::ops {

// Shared-memory parallel kernels for the fixed op vocabulary. Layout is
// planar CHW throughout; conv weights are [cout][cin][k][k]. All kernels are
// deterministic under any OMP_NUM_THREADS: every output element is written by
// exactly one thread and accumulated in a fixed order. Backward kernels
// accumulate (+=) into the destination buffers.
//
// uwie::ref holds serial naive twins of the nontrivial kernels; tests compare
// against them and bench/ times them.

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void conv2d_forward(const T* in, int cin, int h, int w, const T* weight, int cout, int k,
                    int stride, int pad, const T* bias, T* out);

template <typename T>
void conv2d_backward_input(const T* dout, int cout, const T* weight, int cin, int h, int w, int k,
                           int stride, int pad, T* din);

template <typename T>
void conv2d_backward_params(const T* dout, int cout, const T* in, int cin, int h, int w, int k,
                            int stride, int pad, T* dweight, T* dbias);

template <typename T>
void leaky_relu_forward(const T* in, std::size_t n, T slope, T* out);
template <typename T>
void leaky_relu_backward(const T* in, const T* dout, std::size_t n, T slope, T* din);

template <typename T>
void sigmoid_forward(const T* in, std::size_t n, T* out);
template <typename T>
void sigmoid_backward(const T* out, const T* dout, std::size_t n, T* din);

// 2x2 stride-2 max pooling; argmax stores the winning index within each
// window (0..3, row-major) for the backward pass. Ties keep the first.
template <typename T>
void max_pool2_forward(const T* in, int c, int h, int w, T* out, int* argmax);
template <typename T>
void max_pool2_backward(const T* dout, int c, int h, int w, const int* argmax, T* din);

template <typename T>
void upsample2_forward(const T* in, int c, int h, int w, T* out);
template <typename T>
void upsample2_backward(const T* dout, int c, int h, int w, T* din);

template <typename T>
void linear_forward(const T* in, int n_in, const T* weight, int n_out, const T* bias, T* out);
template <typename T>
void linear_backward(const T* in, int n_in, const T* weight, int n_out, const T* dout, T* din,
                     T* dweight, T* dbias);

template <typename T>
void global_avg_pool_forward(const T* in, int c, int h, int w, T* out);
template <typename T>
void global_avg_pool_backward(const T* dout, int c, int h, int w, T* din);

template <typename T>
void softmax_forward(const T* in, int n, T* out);
template <typename T>
void softmax_backward(const T* out, const T* dout, int n, T* din);

// Scalar reductions. *_value returns the loss; backward takes the upstream
// scalar gradient g.
template <typename T>
T mse_value(const T* pred, const T* target, std::size_t n);
template <typename T>
void mse_backward(const T* pred, const T* target, std::size_t n, T g, T* dpred, T* dtarget);

// -sum(onehot_c * log(max(p_c, floor))), natural log.
inline constexpr double kProbFloor = 1e-12;
template <typename T>
T cross_entropy_value(const T* probs, const T* onehot, int n);
template <typename T>
void cross_entropy_backward(const T* probs, const T* onehot, int n, T g, T* dprobs, T* donehot);

// sum(p_c * log p_c) with 0*log0 = 0; in [-ln n, 0] for a distribution.
template <typename T>
T neg_entropy_value(const T* probs, int n);
template <typename T>
void neg_entropy_backward(const T* probs, int n, T g, T* dprobs);

}  // namespace uwie::ops
