#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uwie/common.hpp"
#include "uwie/image.hpp"

namespace uwie {

// Number of merged Jerlov water classes.
inline constexpr int kNumWaterClasses = 6;

// Fixed class_id -> merged-class label table.
const std::array<std::string, kNumWaterClasses>& water_class_labels();

// Per-channel residual energy ratio per meter of depth for one merged Jerlov
// class. Light surviving a path of d meters in channel c is n_coeff[c]^d.
struct WaterTypeSpec {
    int class_id = 0;
    std::string label;
    std::array<double, 3> n_coeff{1.0, 1.0, 1.0};  // (r, g, b), each in (0,1]

    // Equivalent attenuation parameterization: beta_c = -log10(n_coeff[c]).
    std::array<double, 3> beta() const;

    void validate() const;
};

// Loads the coefficient table from a plain-text file: one line per class,
// `class_id label n_r n_g n_b`, '#' comments. All six classes required.
std::vector<WaterTypeSpec> load_water_types(const std::string& path);

// Clear RGB image plus per-pixel depth (meters) for one scene.
struct SceneSample {
    Image clear;  // 3xHxW, values in [0,1]
    Image depth;  // 1xHxW, meters, finite, >= 0
    std::string scene_id;

    void validate() const;
};

// One random synthesis draw: veiling light and an affine depth transform.
struct DegradationParams {
    std::array<double, 3> background{0.0, 0.0, 0.0};  // B in [0,1] per channel
    double depth_scale = 1.0;                         // > 0
    double depth_offset = 0.0;                        // >= 0

    void validate() const;
};

struct DegradedSample {
    Image degraded;  // 3xHxW in [0,1]
    int class_id = 0;
    DegradationParams params;
    std::string scene_id;
    int draw_index = 0;
};

// Sampling ranges for degradation parameters. depth_scale applies to depth
// normalized to [0,1] per scene, so the default span covers near-clear
// through heavily degraded without driving transmission to zero.
struct SynthesisRanges {
    double background_lo = 0.1, background_hi = 0.9;
    double scale_lo = 0.5, scale_hi = 3.0;
    double offset_lo = 0.0, offset_hi = 0.5;

    void validate() const;
};

// T_c(x) = n_coeff[c] ^ depth(x), elementwise. Depth must be finite and >= 0;
// result is a 3-channel map with values in (0,1].
Image compute_transmission(const WaterTypeSpec& spec, const Image& depth);

// Applies the formation model: with d'(x) = depth*scale + offset and
// T = transmission(d'), U_c = I_c*T_c + B_c*(1 - T_c). Every output value is
// a convex combination of the clear pixel and the background light.
DegradedSample degrade_image(const SceneSample& scene, const WaterTypeSpec& spec,
                             const DegradationParams& params);

// Algebraic inversion I_c = (U_c - B_c*(1-T_c)) / T_c. Refuses to divide by
// transmissions below t_min and reports how many pixels were offending.
Image invert_degradation(const Image& degraded, const WaterTypeSpec& spec,
                         const DegradationParams& params, const Image& depth,
                         double t_min = 1e-3);

// Background ~ U[b_lo,b_hi] per channel (r,g,b order), then scale, then
// offset. Draw order is part of the format: datasets must reproduce bitwise.
DegradationParams sample_degradation_params(Rng& rng, const SynthesisRanges& ranges);

// Depth scaled into [0,1] by the per-scene max (zero depth stays zero).
Image normalize_depth(const Image& depth);

// Full cartesian synthesis: |scenes| x 6 classes x draws_per_type samples,
// ordered (scene, class, draw). Each sample's parameters come from a seed
// derived as hash(master_seed, scene_id, class_id, draw_index), so the result
// is identical whether samples are generated serially or in parallel.
std::vector<DegradedSample> synthesize_dataset(std::span<const SceneSample> scenes,
                                               std::span<const WaterTypeSpec> specs,
                                               int draws_per_type, std::uint64_t seed,
                                               const SynthesisRanges& ranges = {});

}  // namespace uwie
