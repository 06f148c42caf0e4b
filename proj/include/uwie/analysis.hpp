#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwie/models.hpp"
#include "uwie/training.hpp"

namespace uwie {

// One flattened bottleneck code with its nuisance label (water type) and
// content label (scene).
struct LatentRecord {
    std::vector<double> z;  // (channel, row, col) order
    int class_id = 0;
    std::string scene_id;
};

std::vector<LatentRecord> collect_latents(ModelBundleF& bundle, std::span<const Sample> samples);

struct PcaResult {
    std::vector<std::vector<double>> coordinates;      // one k-vector per record
    std::vector<std::vector<double>> components;       // k orthonormal d-vectors
    std::vector<double> explained_variance_ratio;      // nonincreasing, sums <= 1
};

// Top-k principal components of the mean-centered records, found by power
// iteration on the covariance matrix with deflation. Component signs are
// normalized so each one's largest-magnitude entry is positive.
PcaResult pca_project(std::span<const LatentRecord> records, int k = 2);
PcaResult pca_project_points(const std::vector<std::vector<double>>& points, int k);

// Mean silhouette with Euclidean distance. Every label needs >= 2 members
// and at least two labels must be present.
double silhouette(const std::vector<std::vector<double>>& coordinates,
                  const std::vector<int>& labels);

struct ProbeConfig {
    int epochs = 120;
    int batch_size = 32;
    double lr = 1e-3;
    double train_fraction = 0.8;
};

// Trains a fresh classifier of the architecture's D design on frozen latents
// (80/20 record split) and reports held-out accuracy. The labels span
// replaces the records' own class ids, so callers can probe permuted or
// synthetic labelings.
double probe_accuracy(std::span<const LatentRecord> latents, std::span<const int> labels,
                      const ArchConfig& arch, std::uint64_t seed, const ProbeConfig& cfg = {});

struct AnalysisSummary {
    double silhouette_by_type = 0.0;     // PCA coords, water-type labels
    double silhouette_by_content = 0.0;  // PCA coords, scene labels
    double probe_accuracy = 0.0;         // full latents, water-type labels
    std::vector<double> explained_variance_ratio;

    nlohmann::json to_json() const;
};

// PCA coordinates as CSV: x..., class_id, scene_id.
void write_pca_csv(const std::string& path, const PcaResult& pca,
                   std::span<const LatentRecord> records);

}  // namespace uwie
