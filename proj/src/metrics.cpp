#include "uwie/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "uwie/common.hpp"
#include "uwie/formation.hpp"

namespace uwie {

double psnr(const Image& a, const Image& b, double max_val) {
    if (!a.same_shape(b)) throw InvalidInputError("psnr: shape mismatch");
    if (!(max_val > 0.0)) throw InvalidInputError("psnr: max_val must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return 100.0;  // cap for identical inputs
    return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimRange = 1.0;

std::array<double, kSsimWindow> gaussian_taps() {
    std::array<double, kSsimWindow> w{};
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - r;
        w[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Valid-region separable Gaussian filter, (H,W) -> (H-10, W-10).
void gauss_filter_valid(const double* img, int h, int w, double* out) {
    static const std::array<double, kSsimWindow> taps = gaussian_taps();
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const double* row = img + static_cast<std::size_t>(y) * w;
        double* trow = tmp.data() + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) acc += taps[static_cast<std::size_t>(k)] * row[x + k];
            trow[x] = acc;
        }
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        double* orow = out + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k)
                acc += taps[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            orow[x] = acc;
        }
    }
}

double ssim_plane(const double* a, const double* b, int h, int w) {
    const int oh = h - kSsimWindow + 1;
    const int ow = w - kSsimWindow + 1;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const std::size_t on = static_cast<std::size_t>(oh) * ow;

    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }

    std::vector<double> mu_a(on), mu_b(on), m_aa(on), m_bb(on), m_ab(on);
    gauss_filter_valid(a, h, w, mu_a.data());
    gauss_filter_valid(b, h, w, mu_b.data());
    gauss_filter_valid(aa.data(), h, w, m_aa.data());
    gauss_filter_valid(bb.data(), h, w, m_bb.data());
    gauss_filter_valid(ab.data(), h, w, m_ab.data());

    const double c1 = (kSsimK1 * kSsimRange) * (kSsimK1 * kSsimRange);
    const double c2 = (kSsimK2 * kSsimRange) * (kSsimK2 * kSsimRange);

    std::vector<double> local(on);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(on); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        const double ma = mu_a[u], mb = mu_b[u];
        const double va = m_aa[u] - ma * ma;
        const double vb = m_bb[u] - mb * mb;
        const double cov = m_ab[u] - ma * mb;
        const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        local[u] = num / den;
    }
    return mean(local);
}

void to_luma(const Image& img, std::vector<double>& out) {
    const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
    out.resize(plane);
    const double* r = img.data.data();
    const double* g = r + plane;
    const double* b = g + plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
}

}  // namespace

double ssim(const Image& a, const Image& b, SsimMode mode) {
    if (!a.same_shape(b)) throw InvalidInputError("ssim: shape mismatch");
    if (a.height < kSsimWindow || a.width < kSsimWindow)
        throw InvalidInputError("ssim: image smaller than " + std::to_string(kSsimWindow) + "x" +
                                std::to_string(kSsimWindow) + " window");

    if (mode == SsimMode::Luma && a.channels == 3) {
        std::vector<double> la, lb;
        to_luma(a, la);
        to_luma(b, lb);
        return ssim_plane(la.data(), lb.data(), a.height, a.width);
    }
    const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
    std::vector<double> scores(static_cast<std::size_t>(a.channels));
    for (int c = 0; c < a.channels; ++c)
        scores[static_cast<std::size_t>(c)] = ssim_plane(a.data.data() + static_cast<std::size_t>(c) * plane,
                                                         b.data.data() + static_cast<std::size_t>(c) * plane,
                                                         a.height, a.width);
    return mean(scores);
}

MetricReport aggregate_scores(std::span<const SampleScore> scores) {
    if (scores.empty()) throw ConfigError("aggregate: empty input");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < scores.size(); ++i) by_class[scores[i].class_id].push_back(i);

    MetricReport report;
    report.total_count = static_cast<int>(scores.size());
    for (const auto& [cid, idx] : by_class) {
        std::vector<double> s(idx.size()), p(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            s[k] = scores[idx[k]].ssim;
            p[k] = scores[idx[k]].psnr;
        }
        MetricReport::ClassRow row;
        row.class_id = cid;
        row.label = (cid >= 0 && cid < kNumWaterClasses)
                        ? water_class_labels()[static_cast<std::size_t>(cid)]
                        : "class_" + std::to_string(cid);
        row.count = static_cast<int>(idx.size());
        row.ssim_mean = mean(s);
        row.psnr_mean = mean(p);
        if (row.ssim_mean < -1.0 || row.ssim_mean > 1.0)
            throw NumericError("ssim mean outside [-1,1] for class " + row.label);
        report.rows.push_back(std::move(row));
    }

    std::vector<double> all_s(scores.size()), all_p(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        all_s[i] = scores[i].ssim;
        all_p[i] = scores[i].psnr;
    }
    report.ssim_overall = mean(all_s);
    report.psnr_overall = mean(all_p);
    return report;
}

MetricReport aggregate_by_class(std::span<const EvalPair> pairs, SsimMode mode) {
    if (pairs.empty()) throw ConfigError("aggregate: empty input");
    std::vector<SampleScore> scores(pairs.size());
    // ssim() parallelizes internally; one score slot per pair keeps the
    // follow-up means bit-stable.
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        scores[i].ssim = ssim(*pairs[i].output, *pairs[i].ground_truth, mode);
        scores[i].psnr = psnr(*pairs[i].output, *pairs[i].ground_truth, kSsimRange);
        scores[i].class_id = pairs[i].class_id;
    }
    return aggregate_scores(scores);
}

void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ostringstream out;
    out << "class,n,ssim_mean,psnr_mean\n";
    out.precision(9);
    for (const auto& row : report.rows)
        out << '"' << row.label << "\"," << row.count << ',' << row.ssim_mean << ',' << row.psnr_mean
            << '\n';
    out << "all," << report.total_count << ',' << report.ssim_overall << ',' << report.psnr_overall
        << '\n';
    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp);
    f << out.str();
    f.close();
    std::filesystem::rename(tmp, path);
}

std::string format_report_table(const MetricReport& report) {
    std::ostringstream out;
    out << "water type        n     SSIM      PSNR (dB)\n";
    out << "-------------------------------------------\n";
    char buf[128];
    for (const auto& row : report.rows) {
        std::snprintf(buf, sizeof(buf), "%-14s %5d   %.4f   %8.4f\n", row.label.c_str(), row.count,
                      row.ssim_mean, row.psnr_mean);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-14s %5d   %.4f   %8.4f\n", "all", report.total_count,
                  report.ssim_overall, report.psnr_overall);
    out << buf;
    return out.str();
}

}  // namespace uwie
