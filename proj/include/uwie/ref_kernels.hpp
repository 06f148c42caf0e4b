#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uwie/image.hpp"
#include "uwie/metrics.hpp"

namespace uwie::ref {

// Serial naive counterparts of the parallel kernels. They are the testing
// oracles and the baseline side of bench/; they never ship in the pipeline
// binaries' hot paths. Kept deliberately simple: direct nested loops, no
// blocking, no OpenMP.

template <typename T>
void conv2d_forward(const T* in, int cin, int h, int w, const T* weight, int cout, int k,
                    int stride, int pad, const T* bias, T* out);

template <typename T>
void conv2d_backward_input(const T* dout, int cout, const T* weight, int cin, int h, int w, int k,
                           int stride, int pad, T* din);

template <typename T>
void conv2d_backward_params(const T* dout, int cout, const T* in, int cin, int h, int w, int k,
                            int stride, int pad, T* dweight, T* dbias);

// SSIM by direct 2-D Gaussian-window convolution, same constants as
// uwie::ssim (11x11, sigma 1.5, K1=0.01, K2=0.03, range 1).
double ssim_reference(const Image& a, const Image& b, SsimMode mode = SsimMode::Luma);

// Exhaustive silhouette: recomputes every pairwise distance, serial.
double silhouette_reference(const std::vector<std::vector<double>>& points,
                            const std::vector<int>& labels);

// Full symmetric eigendecomposition by cyclic Jacobi rotations. Returns
// eigenvalues in descending order with matching eigenvector columns.
void jacobi_eigen_symmetric(std::vector<std::vector<double>> a, std::vector<double>& eigenvalues,
                            std::vector<std::vector<double>>& eigenvectors);

}  // namespace uwie::ref
