#include "uwie/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "uwie/ops.hpp"

namespace uwie {

std::vector<LatentRecord> collect_latents(ModelBundleF& m, std::span<const Sample> samples) {
    std::vector<LatentRecord> records;
    records.reserve(samples.size());
    for (const Sample& s : samples) {
        m.encoder.slot(m.enc_in).data = s.degraded.data;
        m.encoder.forward();
        const TensorF& z = m.encoder.slot(m.enc_z);
        LatentRecord rec;
        rec.z.assign(z.data.begin(), z.data.end());
        rec.class_id = s.class_id;
        rec.scene_id = s.scene_id;
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

// Largest eigenpair of a symmetric matrix by power iteration; deterministic
// start vector from the given rng.
double power_iteration(const std::vector<std::vector<double>>& a, Rng& rng,
                       std::vector<double>& eigvec) {
    const std::size_t d = a.size();
    eigvec.resize(d);
    for (double& v : eigvec) v = rng.uniform(-1.0, 1.0);

    double norm = 0.0;
    for (double v : eigvec) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : eigvec) v /= norm;

    double lambda = 0.0;
    std::vector<double> next(d);
    for (int iter = 0; iter < 1000; ++iter) {
#pragma omp parallel for schedule(static) if (d > 128)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d); ++i) {
            double acc = 0.0;
            const auto& row = a[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < d; ++j) acc += row[j] * eigvec[j];
            next[static_cast<std::size_t>(i)] = acc;
        }
        double nn = 0.0;
        for (double v : next) nn += v * v;
        nn = std::sqrt(nn);
        if (nn == 0.0) return 0.0;  // vector in the null space
        const double new_lambda = nn;
        for (std::size_t i = 0; i < d; ++i) eigvec[i] = next[i] / nn;
        if (std::abs(new_lambda - lambda) <= 1e-12 * std::max(1.0, std::abs(new_lambda)) &&
            iter >= 10) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    // Rayleigh quotient for the final vector (power norm loses the sign).
    double rq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += a[i][j] * eigvec[j];
        rq += eigvec[i] * acc;
    }
    return rq;
}

}  // namespace

PcaResult pca_project_points(const std::vector<std::vector<double>>& points, int k) {
    const std::size_t n = points.size();
    if (n < static_cast<std::size_t>(k) + 1)
        throw InvalidInputError("pca: need at least k+1 records");
    const std::size_t d = points[0].size();
    if (static_cast<std::size_t>(k) > d) throw InvalidInputError("pca: k exceeds dimensionality");
    for (const auto& p : points)
        if (p.size() != d) throw InvalidInputError("pca: inconsistent dimensionality");

    std::vector<double> center(d, 0.0);
    for (const auto& p : points)
        for (std::size_t j = 0; j < d; ++j) center[j] += p[j];
    for (double& c : center) c /= static_cast<double>(n);

    // Covariance (unbiased) of the centered data.
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
#pragma omp parallel for schedule(static) if (d > 64)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d); ++i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        for (std::size_t j = ui; j < d; ++j) {
            double acc = 0.0;
            for (const auto& p : points) acc += (p[ui] - center[ui]) * (p[j] - center[j]);
            cov[ui][j] = acc / static_cast<double>(n - 1);
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) cov[i][j] = cov[j][i];

    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += cov[i][i];
    if (trace <= 0.0) throw InvalidInputError("pca: degenerate input (zero variance)");

    PcaResult result;
    Rng rng(derive_seed(0x9ca5u, "pca.start"));
    for (int comp = 0; comp < k; ++comp) {
        std::vector<double> vec;
        const double lambda = power_iteration(cov, rng, vec);
        if (lambda <= 0.0)
            throw InvalidInputError("pca: rank deficient input, component " + std::to_string(comp));

        // Sign convention: largest-magnitude entry positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs(vec[i]) > std::abs(vec[arg])) arg = i;
        if (vec[arg] < 0.0)
            for (double& v : vec) v = -v;

        result.components.push_back(vec);
        result.explained_variance_ratio.push_back(lambda / trace);

        // Deflate: cov -= lambda * v v^T
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i][j] -= lambda * vec[i] * vec[j];
    }

    result.coordinates.assign(n, std::vector<double>(static_cast<std::size_t>(k), 0.0));
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
        const auto& p = points[static_cast<std::size_t>(r)];
        for (int comp = 0; comp < k; ++comp) {
            double acc = 0.0;
            const auto& v = result.components[static_cast<std::size_t>(comp)];
            for (std::size_t j = 0; j < d; ++j) acc += (p[j] - center[j]) * v[j];
            result.coordinates[static_cast<std::size_t>(r)][static_cast<std::size_t>(comp)] = acc;
        }
    }
    return result;
}

PcaResult pca_project(std::span<const LatentRecord> records, int k) {
    std::vector<std::vector<double>> points;
    points.reserve(records.size());
    for (const auto& r : records) points.push_back(r.z);
    return pca_project_points(points, k);
}

double silhouette(const std::vector<std::vector<double>>& coords, const std::vector<int>& labels) {
    const std::size_t n = coords.size();
    if (n != labels.size()) throw InvalidInputError("silhouette: size mismatch");

    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    if (clusters.size() < 2) throw InvalidInputError("silhouette: need at least two labels");
    for (const auto& [label, members] : clusters)
        if (members.size() < 2)
            throw InvalidInputError("silhouette: singleton cluster for label " +
                                    std::to_string(label));

    const std::size_t d = coords[0].size();
    std::vector<double> scores(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        double a_i = 0.0;
        double b_i = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : clusters) {
            double sum = 0.0;
            for (std::size_t j : members) {
                if (j == i) continue;
                double sq = 0.0;
                for (std::size_t t = 0; t < d; ++t) {
                    const double diff = coords[i][t] - coords[j][t];
                    sq += diff * diff;
                }
                sum += std::sqrt(sq);
            }
            if (label == labels[i])
                a_i = sum / static_cast<double>(members.size() - 1);
            else
                b_i = std::min(b_i, sum / static_cast<double>(members.size()));
        }
        scores[i] = (b_i - a_i) / std::max(a_i, b_i);
    }
    return mean(scores);
}

double probe_accuracy(std::span<const LatentRecord> latents, std::span<const int> labels,
                      const ArchConfig& arch, std::uint64_t seed, const ProbeConfig& cfg) {
    if (latents.size() != labels.size()) throw InvalidInputError("probe: latents/labels mismatch");
    if (latents.size() < 10) throw InvalidInputError("probe: too few records");

    const std::size_t z_dim = static_cast<std::size_t>(arch.latent()) *
                              static_cast<std::size_t>(arch.bottleneck_h()) *
                              static_cast<std::size_t>(arch.bottleneck_w());
    for (const auto& r : latents)
        if (r.z.size() != z_dim)
            throw ShapeError("probe: latent dimension does not match architecture");

    // Deterministic 80/20 split by record.
    std::vector<std::size_t> order(latents.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "probe.split"));
    shuffle(std::span<std::size_t>(order), rng);
    const std::size_t n_train = static_cast<std::size_t>(
        std::round(cfg.train_fraction * static_cast<double>(order.size())));
    if (n_train == 0 || n_train == order.size()) throw InvalidInputError("probe: degenerate split");

    std::set<int> train_classes, all_classes;
    for (std::size_t i = 0; i < order.size(); ++i) {
        all_classes.insert(labels[order[i]]);
        if (i < n_train) train_classes.insert(labels[order[i]]);
    }
    if (train_classes != all_classes)
        throw DataError("probe: some class is absent from the training split");

    // Fresh classifier of the same D design on frozen latents.
    Graph<float> g;
    const int z_in = g.add_input("z", {arch.latent(), arch.bottleneck_h(), arch.bottleneck_w()});
    int cur = z_in;
    int cur_ch = arch.latent();
    const std::vector<int> widths = arch.classifier_widths();
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const int w = g.add_param("probe.s" + std::to_string(i) + ".w", {widths[i], cur_ch, 3, 3});
        const int b = g.add_param("probe.s" + std::to_string(i) + ".b", {widths[i]});
        cur = g.leaky_relu(g.conv2d(cur, w, b, 2, 1), 0.2);
        cur_ch = widths[i];
    }
    const int pooled = g.global_avg_pool(cur);
    const int wl = g.add_param("probe.head.w", {arch.num_classes, cur_ch});
    const int bl = g.add_param("probe.head.b", {arch.num_classes});
    const int probs = g.softmax(g.linear(pooled, wl, bl));
    g.mark_output(probs);
    init_params(g, derive_seed(seed, "probe.init"));

    AdamState<float> opt;
    opt.init_like(g);
    GradBuffer<float> grads;
    grads.init_like(g);
    AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

    std::vector<float> onehot(static_cast<std::size_t>(arch.num_classes));
    std::vector<std::size_t> train_idx(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(n_train));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng(derive_seed(seed, "probe.shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle(std::span<std::size_t>(train_idx), erng);
        std::size_t done = 0;
        while (done < train_idx.size()) {
            const std::size_t bn =
                std::min(static_cast<std::size_t>(cfg.batch_size), train_idx.size() - done);
            grads.zero();
            for (std::size_t bi = 0; bi < bn; ++bi) {
                const std::size_t ri = train_idx[done + bi];
                TensorF& zin = g.slot(z_in);
                for (std::size_t j = 0; j < z_dim; ++j)
                    zin.data[j] = static_cast<float>(latents[ri].z[j]);
                g.forward();
                std::fill(onehot.begin(), onehot.end(), 0.0f);
                onehot[static_cast<std::size_t>(labels[ri])] = 1.0f;
                TensorF& p = g.slot(probs);
                p.zero_grad();
                ops::cross_entropy_backward(p.data.data(), onehot.data(), arch.num_classes, 1.0f,
                                            p.grad.data(), static_cast<float*>(nullptr));
                g.backward(true);
                grads.add_from(g);
            }
            grads.scale(1.0f / static_cast<float>(bn));
            adam_step(g, opt, adam, grads.sums);
            done += bn;
        }
    }

    std::size_t correct = 0;
    for (std::size_t i = n_train; i < order.size(); ++i) {
        const std::size_t ri = order[i];
        TensorF& zin = g.slot(z_in);
        for (std::size_t j = 0; j < z_dim; ++j) zin.data[j] = static_cast<float>(latents[ri].z[j]);
        g.forward();
        const auto& p = g.slot(probs).data;
        const std::size_t arg =
            static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        if (arg == static_cast<std::size_t>(labels[ri])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(order.size() - n_train);
}

nlohmann::json AnalysisSummary::to_json() const {
    return nlohmann::json{{"silhouette_by_type", silhouette_by_type},
                          {"silhouette_by_content", silhouette_by_content},
                          {"probe_accuracy", probe_accuracy},
                          {"explained_variance_ratio", explained_variance_ratio}};
}

void write_pca_csv(const std::string& path, const PcaResult& pca,
                   std::span<const LatentRecord> records) {
    if (pca.coordinates.size() != records.size())
        throw InvalidInputError("pca csv: coordinate/record count mismatch");
    std::ostringstream out;
    const std::size_t k = pca.coordinates.empty() ? 0 : pca.coordinates[0].size();
    for (std::size_t c = 0; c < k; ++c) out << "pc" << (c + 1) << ',';
    out << "class_id,scene_id\n";
    out.precision(9);
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (double v : pca.coordinates[i]) out << v << ',';
        out << records[i].class_id << ',' << records[i].scene_id << '\n';
    }
    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp);
    f << out.str();
    f.close();
    std::filesystem::rename(tmp, path);
}

}  // namespace uwie
