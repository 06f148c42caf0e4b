#include "uwie/formation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace uwie {

const std::array<std::string, kNumWaterClasses>& water_class_labels() {
    static const std::array<std::string, kNumWaterClasses> labels = {
        "1,3", "5", "7", "9", "I,IA,IB", "II,III"};
    return labels;
}

std::array<double, 3> WaterTypeSpec::beta() const {
    return {-std::log10(n_coeff[0]), -std::log10(n_coeff[1]), -std::log10(n_coeff[2])};
}

void WaterTypeSpec::validate() const {
    if (class_id < 0 || class_id >= kNumWaterClasses)
        throw InvalidInputError("water class_id out of range: " + std::to_string(class_id));
    if (label != water_class_labels()[static_cast<std::size_t>(class_id)])
        throw InvalidInputError("label '" + label + "' does not match class_id " +
                                std::to_string(class_id));
    for (double n : n_coeff)
        if (!(n > 0.0 && n <= 1.0))
            throw InvalidInputError("n_coeff outside (0,1] for class " + label);
}

std::vector<WaterTypeSpec> load_water_types(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open water type table: " + path);

    std::vector<WaterTypeSpec> specs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        WaterTypeSpec spec;
        if (!(ss >> spec.class_id)) continue;  // blank / comment-only line
        if (!(ss >> spec.label >> spec.n_coeff[0] >> spec.n_coeff[1] >> spec.n_coeff[2]))
            throw FormatError(path + ":" + std::to_string(lineno) + ": malformed row");
        spec.validate();
        specs.push_back(std::move(spec));
    }
    if (specs.size() != kNumWaterClasses)
        throw FormatError(path + ": expected " + std::to_string(kNumWaterClasses) +
                          " classes, found " + std::to_string(specs.size()));
    std::sort(specs.begin(), specs.end(),
              [](const WaterTypeSpec& a, const WaterTypeSpec& b) { return a.class_id < b.class_id; });
    for (int i = 0; i < kNumWaterClasses; ++i)
        if (specs[static_cast<std::size_t>(i)].class_id != i)
            throw FormatError(path + ": duplicate or missing class_id " + std::to_string(i));
    return specs;
}

void SceneSample::validate() const {
    if (clear.channels != 3) throw InvalidInputError("scene '" + scene_id + "': clear must be RGB");
    if (depth.channels != 1) throw InvalidInputError("scene '" + scene_id + "': depth must be single-channel");
    if (clear.height != depth.height || clear.width != depth.width)
        throw InvalidInputError("scene '" + scene_id + "': clear and depth shapes differ");
    for (double v : clear.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidInputError("scene '" + scene_id + "': clear values outside [0,1]");
    for (double v : depth.data)
        if (!std::isfinite(v) || v < 0.0)
            throw InvalidInputError("scene '" + scene_id + "': depth values must be finite and >= 0");
}

void DegradationParams::validate() const {
    for (double b : background)
        if (!(b >= 0.0 && b <= 1.0)) throw InvalidInputError("background outside [0,1]");
    if (!(depth_scale > 0.0)) throw InvalidInputError("depth_scale must be > 0");
    if (!(depth_offset >= 0.0)) throw InvalidInputError("depth_offset must be >= 0");
}

void SynthesisRanges::validate() const {
    if (background_lo > background_hi || scale_lo > scale_hi || offset_lo > offset_hi)
        throw ConfigError("synthesis range has lo > hi");
    if (background_lo < 0.0 || background_hi > 1.0) throw ConfigError("background range outside [0,1]");
    if (!(scale_lo > 0.0)) throw ConfigError("depth_scale range must be positive");
    if (offset_lo < 0.0) throw ConfigError("depth_offset range must be nonnegative");
}

Image compute_transmission(const WaterTypeSpec& spec, const Image& depth) {
    spec.validate();
    if (depth.channels != 1) throw InvalidInputError("depth must be single-channel");
    for (double v : depth.data)
        if (!std::isfinite(v) || v < 0.0)
            throw InvalidInputError("depth values must be finite and >= 0");

    Image t(3, depth.height, depth.width);
    const std::size_t plane = depth.data.size();
    for (int c = 0; c < 3; ++c) {
        const double n = spec.n_coeff[static_cast<std::size_t>(c)];
        double* out = t.data.data() + static_cast<std::size_t>(c) * plane;
#pragma omp parallel for schedule(static) if (plane > 4096)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plane); ++i)
            out[i] = std::pow(n, depth.data[static_cast<std::size_t>(i)]);
    }
    return t;
}

DegradedSample degrade_image(const SceneSample& scene, const WaterTypeSpec& spec,
                             const DegradationParams& params) {
    scene.validate();
    params.validate();

    Image d_eff(1, scene.depth.height, scene.depth.width);
    for (std::size_t i = 0; i < d_eff.data.size(); ++i)
        d_eff.data[i] = scene.depth.data[i] * params.depth_scale + params.depth_offset;
    const Image t = compute_transmission(spec, d_eff);

    DegradedSample out;
    out.degraded = Image(3, scene.clear.height, scene.clear.width);
    out.class_id = spec.class_id;
    out.params = params;
    out.scene_id = scene.scene_id;

    const std::size_t plane = d_eff.data.size();
    for (int c = 0; c < 3; ++c) {
        const double b = params.background[static_cast<std::size_t>(c)];
        const double* ic = scene.clear.data.data() + static_cast<std::size_t>(c) * plane;
        const double* tc = t.data.data() + static_cast<std::size_t>(c) * plane;
        double* uc = out.degraded.data.data() + static_cast<std::size_t>(c) * plane;
#pragma omp parallel for schedule(static) if (plane > 4096)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plane); ++i)
            uc[i] = ic[i] * tc[i] + b * (1.0 - tc[i]);
    }
    return out;
}

Image invert_degradation(const Image& degraded, const WaterTypeSpec& spec,
                         const DegradationParams& params, const Image& depth, double t_min) {
    if (degraded.channels != 3) throw InvalidInputError("degraded image must be RGB");
    if (degraded.height != depth.height || degraded.width != depth.width)
        throw InvalidInputError("degraded and depth shapes differ");
    params.validate();

    Image d_eff(1, depth.height, depth.width);
    for (std::size_t i = 0; i < d_eff.data.size(); ++i)
        d_eff.data[i] = depth.data[i] * params.depth_scale + params.depth_offset;
    const Image t = compute_transmission(spec, d_eff);

    std::size_t bad = 0;
    for (double v : t.data)
        if (v < t_min) ++bad;
    if (bad > 0)
        throw IllConditionedError("transmission below " + std::to_string(t_min) + " at " +
                                  std::to_string(bad) + " pixel-channels");

    Image clear(3, degraded.height, degraded.width);
    const std::size_t plane = d_eff.data.size();
    for (int c = 0; c < 3; ++c) {
        const double b = params.background[static_cast<std::size_t>(c)];
        const double* uc = degraded.data.data() + static_cast<std::size_t>(c) * plane;
        const double* tc = t.data.data() + static_cast<std::size_t>(c) * plane;
        double* ic = clear.data.data() + static_cast<std::size_t>(c) * plane;
#pragma omp parallel for schedule(static) if (plane > 4096)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plane); ++i)
            ic[i] = (uc[i] - b * (1.0 - tc[i])) / tc[i];
    }
    return clear;
}

DegradationParams sample_degradation_params(Rng& rng, const SynthesisRanges& ranges) {
    ranges.validate();
    DegradationParams p;
    for (int c = 0; c < 3; ++c)
        p.background[static_cast<std::size_t>(c)] = rng.uniform(ranges.background_lo, ranges.background_hi);
    p.depth_scale = rng.uniform(ranges.scale_lo, ranges.scale_hi);
    p.depth_offset = rng.uniform(ranges.offset_lo, ranges.offset_hi);
    return p;
}

Image normalize_depth(const Image& depth) {
    Image out = depth;
    double mx = 0.0;
    for (double v : depth.data) mx = std::max(mx, v);
    if (mx > 0.0)
        for (double& v : out.data) v /= mx;
    return out;
}

std::vector<DegradedSample> synthesize_dataset(std::span<const SceneSample> scenes,
                                               std::span<const WaterTypeSpec> specs,
                                               int draws_per_type, std::uint64_t seed,
                                               const SynthesisRanges& ranges) {
    if (scenes.empty()) throw ConfigError("no scenes to synthesize from");
    if (draws_per_type < 1) throw ConfigError("draws_per_type must be >= 1");
    if (specs.size() != kNumWaterClasses)
        throw ConfigError("expected all " + std::to_string(kNumWaterClasses) + " water type specs");
    ranges.validate();
    for (const auto& s : scenes) s.validate();

    std::vector<Image> norm_depths(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) norm_depths[i] = normalize_depth(scenes[i].depth);

    const std::size_t per_scene = static_cast<std::size_t>(kNumWaterClasses) * draws_per_type;
    const std::size_t total = scenes.size() * per_scene;
    std::vector<DegradedSample> out(total);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t flat = 0; flat < static_cast<std::ptrdiff_t>(total); ++flat) {
        const std::size_t si = static_cast<std::size_t>(flat) / per_scene;
        const std::size_t rem = static_cast<std::size_t>(flat) % per_scene;
        const int ci = static_cast<int>(rem / static_cast<std::size_t>(draws_per_type));
        const int di = static_cast<int>(rem % static_cast<std::size_t>(draws_per_type));

        SceneSample norm{scenes[si].clear, norm_depths[si], scenes[si].scene_id};
        Rng rng(derive_seed(seed, norm.scene_id, static_cast<std::uint64_t>(ci),
                            static_cast<std::uint64_t>(di)));
        DegradationParams params = sample_degradation_params(rng, ranges);
        DegradedSample sample = degrade_image(norm, specs[static_cast<std::size_t>(ci)], params);
        sample.draw_index = di;
        out[static_cast<std::size_t>(flat)] = std::move(sample);
    }
    return out;
}

}  // namespace uwie
