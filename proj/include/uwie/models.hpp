#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwie/graph.hpp"
#include "uwie/image.hpp"
#include "uwie/tensor.hpp"

namespace uwie {

// Shape/width parameters for the three networks. The bottleneck code Z has
// latent() channels at (H,W)/2^levels; the classifier reads Z through
// stride-2 conv stages listed in classifier_widths().
struct ArchConfig {
    int input_h = 32;
    int input_w = 32;
    int base_channels = 8;
    int levels = 3;
    int latent_channels = 0;              // 0 -> base_channels * 2^levels
    std::vector<int> classifier_channels; // empty -> {2,4,4} x latent
    int num_classes = 6;

    int latent() const { return latent_channels > 0 ? latent_channels : base_channels << levels; }
    int bottleneck_h() const { return input_h >> levels; }
    int bottleneck_w() const { return input_w >> levels; }
    std::vector<int> classifier_widths() const;

    void validate() const;
    nlohmann::json to_json() const;
    static ArchConfig from_json(const nlohmann::json& j);

    bool operator==(const ArchConfig&) const = default;
};

// Encoder E, decoder G and nuisance classifier D plus the slot ids needed to
// wire them together. E emits the bottleneck Z and one skip activation per
// level; G consumes Z and the skips; D consumes Z alone.
template <typename T>
struct ModelBundle {
    ArchConfig config;

    Graph<T> encoder;
    int enc_in = -1;
    int enc_z = -1;
    std::vector<int> enc_skips;  // level order, shallow to deep

    Graph<T> decoder;
    int dec_z = -1;
    std::vector<int> dec_skips;
    int dec_out = -1;

    Graph<T> classifier;
    int cls_z = -1;
    int cls_probs = -1;
};

using ModelBundleF = ModelBundle<float>;

template <typename T>
ModelBundle<T> build_model(const ArchConfig& config);

// Seeds each network from the master seed (derived independently, so adding
// or dropping one network never shifts another's initialization).
template <typename T>
void init_model(ModelBundle<T>& bundle, std::uint64_t master_seed);

template <typename T>
struct Encoded {
    Tensor<T> z;
    std::vector<Tensor<T>> skips;
};

// Convenience wrappers that copy values in and out of the graphs. Training
// uses the graphs directly to keep gradients wired.
template <typename T>
Encoded<T> encode(ModelBundle<T>& bundle, const Tensor<T>& image);
template <typename T>
Tensor<T> decode(ModelBundle<T>& bundle, const Encoded<T>& enc);
template <typename T>
Tensor<T> classify(ModelBundle<T>& bundle, const Tensor<T>& z);

// Image (double, CHW) <-> network tensor (CHW float) adapters.
TensorF tensor_from_image(const Image& img);
Image image_from_tensor(const TensorF& t);

}  // namespace uwie
