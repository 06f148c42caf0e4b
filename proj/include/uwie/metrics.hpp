#pragma once

#include <span>
#include <string>
#include <vector>

#include "uwie/image.hpp"

namespace uwie {

// 10*log10(max_val^2 / MSE). Identical images return the documented 100 dB cap.
double psnr(const Image& a, const Image& b, double max_val = 1.0);

enum class SsimMode { Luma, PerChannel };

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1.0, mean over the valid region. Luma mode converts with
// 0.299/0.587/0.114 first; PerChannel averages the per-channel scores.
double ssim(const Image& a, const Image& b, SsimMode mode = SsimMode::Luma);

inline constexpr int kSsimWindow = 11;

struct SampleScore {
    double ssim = 0.0;
    double psnr = 0.0;
    int class_id = 0;
};

struct MetricReport {
    struct ClassRow {
        int class_id = 0;
        std::string label;
        int count = 0;
        double ssim_mean = 0.0;
        double psnr_mean = 0.0;
    };
    std::vector<ClassRow> rows;  // one per class present, ascending class_id
    int total_count = 0;
    double ssim_overall = 0.0;
    double psnr_overall = 0.0;
};

struct EvalPair {
    const Image* output = nullptr;
    const Image* ground_truth = nullptr;
    int class_id = 0;
};

// Per-class and overall arithmetic means. Scores may be computed in parallel;
// the means use pairwise summation in index order, so results are bit-stable.
MetricReport aggregate_scores(std::span<const SampleScore> scores);
MetricReport aggregate_by_class(std::span<const EvalPair> pairs, SsimMode mode = SsimMode::Luma);

// CSV rows: class label, n, ssim_mean, psnr_mean, with a trailing "all" row.
void write_report_csv(const std::string& path, const MetricReport& report);
std::string format_report_table(const MetricReport& report);

}  // namespace uwie
