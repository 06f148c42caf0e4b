#include "uwie/ref_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "uwie/common.hpp"
#include "uwie/ops.hpp"

namespace uwie::ref {

template <typename T>
void conv2d_forward(const T* in, int cin, int h, int w, const T* weight, int cout, int k,
                    int stride, int pad, const T* bias, T* out) {
    const int oh = ops::conv_out_extent(h, k, stride, pad);
    const int ow = ops::conv_out_extent(w, k, stride, pad);
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T acc = bias ? bias[co] : T(0);
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += weight[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx] *
                                   in[(static_cast<std::size_t>(ci) * h + iy) * w + ix];
                        }
                out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] = acc;
            }
}

template <typename T>
void conv2d_backward_input(const T* dout, int cout, const T* weight, int cin, int h, int w, int k,
                           int stride, int pad, T* din) {
    const int oh = ops::conv_out_extent(h, k, stride, pad);
    const int ow = ops::conv_out_extent(w, k, stride, pad);
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const T g = dout[(static_cast<std::size_t>(co) * oh + oy) * ow + ox];
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            din[(static_cast<std::size_t>(ci) * h + iy) * w + ix] +=
                                g * weight[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
                        }
            }
}

template <typename T>
void conv2d_backward_params(const T* dout, int cout, const T* in, int cin, int h, int w, int k,
                            int stride, int pad, T* dweight, T* dbias) {
    const int oh = ops::conv_out_extent(h, k, stride, pad);
    const int ow = ops::conv_out_extent(w, k, stride, pad);
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const T g = dout[(static_cast<std::size_t>(co) * oh + oy) * ow + ox];
                if (dbias) dbias[co] += g;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            dweight[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx] +=
                                g * in[(static_cast<std::size_t>(ci) * h + iy) * w + ix];
                        }
            }
}

#define UWIE_INSTANTIATE_REF(T)                                                                     \
    template void conv2d_forward<T>(const T*, int, int, int, const T*, int, int, int, int,         \
                                    const T*, T*);                                                  \
    template void conv2d_backward_input<T>(const T*, int, const T*, int, int, int, int, int, int,  \
                                           T*);                                                     \
    template void conv2d_backward_params<T>(const T*, int, const T*, int, int, int, int, int, int, \
                                            T*, T*);

UWIE_INSTANTIATE_REF(float)
UWIE_INSTANTIATE_REF(double)
#undef UWIE_INSTANTIATE_REF

namespace {

double ssim_plane_direct(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    constexpr int win = 11;
    constexpr double sigma = 1.5, k1 = 0.01, k2 = 0.03, range = 1.0;
    const double c1 = (k1 * range) * (k1 * range);
    const double c2 = (k2 * range) * (k2 * range);

    double taps[win][win];
    double sum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - win / 2, dx = j - win / 2;
            taps[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            sum += taps[i][j];
        }
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) taps[i][j] /= sum;

    const int oh = h - win + 1, ow = w - win + 1;
    double total = 0.0;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double va = a[static_cast<std::size_t>(y + i) * w + x + j];
                    const double vb = b[static_cast<std::size_t>(y + i) * w + x + j];
                    const double t = taps[i][j];
                    ma += t * va;
                    mb += t * vb;
                    maa += t * va * va;
                    mbb += t * vb * vb;
                    mab += t * va * vb;
                }
            const double sa = maa - ma * ma;
            const double sb = mbb - mb * mb;
            const double sab = mab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * sab + c2)) /
                     ((ma * ma + mb * mb + c1) * (sa + sb + c2));
        }
    return total / (static_cast<double>(oh) * ow);
}

}  // namespace

double ssim_reference(const Image& a, const Image& b, SsimMode mode) {
    if (!a.same_shape(b)) throw InvalidInputError("ssim_reference: shape mismatch");
    const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
    if (mode == SsimMode::Luma && a.channels == 3) {
        std::vector<double> la(plane), lb(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            la[i] = 0.299 * a.data[i] + 0.587 * a.data[plane + i] + 0.114 * a.data[2 * plane + i];
            lb[i] = 0.299 * b.data[i] + 0.587 * b.data[plane + i] + 0.114 * b.data[2 * plane + i];
        }
        return ssim_plane_direct(la, lb, a.height, a.width);
    }
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> pa(a.data.begin() + static_cast<std::ptrdiff_t>(c * plane),
                               a.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
        std::vector<double> pb(b.data.begin() + static_cast<std::ptrdiff_t>(c * plane),
                               b.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
        total += ssim_plane_direct(pa, pb, a.height, a.width);
    }
    return total / a.channels;
}

double silhouette_reference(const std::vector<std::vector<double>>& points,
                            const std::vector<int>& labels) {
    const std::size_t n = points.size();
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);

    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t d = 0; d < points[i].size(); ++d) {
            const double diff = points[i][d] - points[j][d];
            s += diff * diff;
        }
        return std::sqrt(s);
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a_i = 0.0;
        const auto& own = clusters.at(labels[i]);
        for (std::size_t j : own)
            if (j != i) a_i += dist(i, j);
        a_i /= static_cast<double>(own.size() - 1);

        double b_i = std::numeric_limits<double>::infinity();
        for (const auto& [lab, members] : clusters) {
            if (lab == labels[i]) continue;
            double d = 0.0;
            for (std::size_t j : members) d += dist(i, j);
            b_i = std::min(b_i, d / static_cast<double>(members.size()));
        }
        total += (b_i - a_i) / std::max(a_i, b_i);
    }
    return total / static_cast<double>(n);
}

void jacobi_eigen_symmetric(std::vector<std::vector<double>> a, std::vector<double>& eigenvalues,
                            std::vector<std::vector<double>>& eigenvectors) {
    const std::size_t n = a.size();
    eigenvectors.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) eigenvectors[i][i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;

        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = eigenvectors[i][p], viq = eigenvectors[i][q];
                    eigenvectors[i][p] = c * vip - s * viq;
                    eigenvectors[i][q] = s * vip + c * viq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });

    eigenvalues.resize(n);
    std::vector<std::vector<double>> sorted(n, std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        eigenvalues[k] = a[order[k]][order[k]];
        for (std::size_t i = 0; i < n; ++i) sorted[i][k] = eigenvectors[i][order[k]];
    }
    eigenvectors = std::move(sorted);
}

}  // namespace uwie::ref
