#include "uwie/models.hpp"

#include <algorithm>
#include <cmath>

namespace uwie {

namespace {
constexpr double kEncoderSlope = 0.2;  // leaky slope in E and D
constexpr double kDecoderSlope = 0.0;  // plain relu in G
}  // namespace

std::vector<int> ArchConfig::classifier_widths() const {
    if (!classifier_channels.empty()) return classifier_channels;
    return {2 * latent(), 4 * latent(), 4 * latent()};
}

void ArchConfig::validate() const {
    if (levels < 1) throw ConfigError("levels must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    const int div = 1 << levels;
    if (input_h % div != 0 || input_w % div != 0)
        throw ConfigError("input size " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " not divisible by 2^" + std::to_string(levels));
    if (latent_channels < 0) throw ConfigError("latent_channels must be >= 0");
    for (int c : classifier_channels)
        if (c < 1) throw ConfigError("classifier channel widths must be positive");
}

nlohmann::json ArchConfig::to_json() const {
    return nlohmann::json{{"input_h", input_h},
                          {"input_w", input_w},
                          {"base_channels", base_channels},
                          {"levels", levels},
                          {"latent_channels", latent_channels},
                          {"classifier_channels", classifier_channels},
                          {"num_classes", num_classes}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
    ArchConfig c;
    c.input_h = j.at("input_h").get<int>();
    c.input_w = j.at("input_w").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.levels = j.at("levels").get<int>();
    c.latent_channels = j.value("latent_channels", 0);
    c.classifier_channels = j.value("classifier_channels", std::vector<int>{});
    c.num_classes = j.value("num_classes", 6);
    c.validate();
    return c;
}

namespace {

// Two 3x3 convs with activation; returns the output slot.
template <typename T>
int conv_block(Graph<T>& g, int x, int in_ch, int out_ch, double slope, const std::string& prefix) {
    const int w1 = g.add_param(prefix + ".conv1.w", {out_ch, in_ch, 3, 3});
    const int b1 = g.add_param(prefix + ".conv1.b", {out_ch});
    int cur = g.leaky_relu(g.conv2d(x, w1, b1, 1, 1), slope);
    const int w2 = g.add_param(prefix + ".conv2.w", {out_ch, out_ch, 3, 3});
    const int b2 = g.add_param(prefix + ".conv2.b", {out_ch});
    return g.leaky_relu(g.conv2d(cur, w2, b2, 1, 1), slope);
}

}  // namespace

template <typename T>
ModelBundle<T> build_model(const ArchConfig& config) {
    config.validate();
    ModelBundle<T> m;
    m.config = config;

    const int L = config.levels;
    std::vector<int> ch(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) ch[static_cast<std::size_t>(i)] = config.base_channels << i;
    const int zc = config.latent();
    const int zh = config.bottleneck_h();
    const int zw = config.bottleneck_w();

    // Encoder: L down blocks emitting skips, then the bottleneck block -> Z.
    {
        Graph<T>& g = m.encoder;
        m.enc_in = g.add_input("image", {3, config.input_h, config.input_w});
        int cur = m.enc_in;
        int cur_ch = 3;
        for (int i = 0; i < L; ++i) {
            const int skip = conv_block(g, cur, cur_ch, ch[static_cast<std::size_t>(i)], kEncoderSlope,
                                        "enc.l" + std::to_string(i));
            m.enc_skips.push_back(skip);
            cur = g.max_pool2(skip);
            cur_ch = ch[static_cast<std::size_t>(i)];
        }
        m.enc_z = conv_block(g, cur, cur_ch, zc, kEncoderSlope, "enc.bottleneck");
        g.mark_output(m.enc_z);
        for (int s : m.enc_skips) g.mark_output(s);
    }

    // Decoder: per level, nearest-neighbor upsample + conv, concat the skip,
    // then a conv block; final 1x1 conv + sigmoid to RGB.
    {
        Graph<T>& g = m.decoder;
        m.dec_z = g.add_input("z", {zc, zh, zw});
        for (int i = 0; i < L; ++i) {
            const int c = ch[static_cast<std::size_t>(i)];
            m.dec_skips.push_back(g.add_input("skip" + std::to_string(i),
                                              {c, config.input_h >> i, config.input_w >> i}));
        }
        int cur = m.dec_z;
        int cur_ch = zc;
        for (int i = L - 1; i >= 0; --i) {
            const int c = ch[static_cast<std::size_t>(i)];
            const std::string prefix = "dec.l" + std::to_string(i);
            const int up = g.upsample2(cur);
            const int wu = g.add_param(prefix + ".up.w", {c, cur_ch, 3, 3});
            const int bu = g.add_param(prefix + ".up.b", {c});
            int x = g.leaky_relu(g.conv2d(up, wu, bu, 1, 1), kDecoderSlope);
            x = g.concat_channels(x, m.dec_skips[static_cast<std::size_t>(i)]);
            cur = conv_block(g, x, 2 * c, c, kDecoderSlope, prefix);
            cur_ch = c;
        }
        const int wf = g.add_param("dec.out.w", {3, cur_ch, 1, 1});
        const int bf = g.add_param("dec.out.b", {3});
        m.dec_out = g.sigmoid(g.conv2d(cur, wf, bf, 1, 0));
        g.mark_output(m.dec_out);
    }

    // Classifier: stride-2 conv stages over Z, global average pool, one
    // linear layer to class logits, softmax.
    {
        Graph<T>& g = m.classifier;
        m.cls_z = g.add_input("z", {zc, zh, zw});
        int cur = m.cls_z;
        int cur_ch = zc;
        const std::vector<int> widths = config.classifier_widths();
        for (std::size_t i = 0; i < widths.size(); ++i) {
            const std::string prefix = "cls.s" + std::to_string(i);
            const int w = g.add_param(prefix + ".w", {widths[i], cur_ch, 3, 3});
            const int b = g.add_param(prefix + ".b", {widths[i]});
            cur = g.leaky_relu(g.conv2d(cur, w, b, 2, 1), kEncoderSlope);
            cur_ch = widths[i];
        }
        const int pooled = g.global_avg_pool(cur);
        const int wl = g.add_param("cls.head.w", {config.num_classes, cur_ch});
        const int bl = g.add_param("cls.head.b", {config.num_classes});
        const int logits = g.linear(pooled, wl, bl);
        m.cls_probs = g.softmax(logits);
        g.mark_output(m.cls_probs);
    }

    return m;
}

template <typename T>
void init_model(ModelBundle<T>& bundle, std::uint64_t master_seed) {
    init_params(bundle.encoder, derive_seed(master_seed, "init.encoder"));
    init_params(bundle.decoder, derive_seed(master_seed, "init.decoder"));
    init_params(bundle.classifier, derive_seed(master_seed, "init.classifier"));
}

template <typename T>
Encoded<T> encode(ModelBundle<T>& bundle, const Tensor<T>& image) {
    Tensor<T>& in = bundle.encoder.slot(bundle.enc_in);
    if (image.shape != in.shape)
        throw ShapeError("encode: image shape " + shape_str(image.shape) + " != configured " +
                         shape_str(in.shape));
    in.data = image.data;
    bundle.encoder.forward();
    Encoded<T> out;
    out.z = bundle.encoder.slot(bundle.enc_z);
    for (int s : bundle.enc_skips) out.skips.push_back(bundle.encoder.slot(s));
    return out;
}

template <typename T>
Tensor<T> decode(ModelBundle<T>& bundle, const Encoded<T>& enc) {
    Tensor<T>& zin = bundle.decoder.slot(bundle.dec_z);
    if (enc.z.shape != zin.shape) throw ShapeError("decode: z shape mismatch");
    if (enc.skips.size() != bundle.dec_skips.size()) throw ShapeError("decode: skip count mismatch");
    zin.data = enc.z.data;
    for (std::size_t i = 0; i < enc.skips.size(); ++i) {
        Tensor<T>& s = bundle.decoder.slot(bundle.dec_skips[i]);
        if (enc.skips[i].shape != s.shape)
            throw ShapeError("decode: skip " + std::to_string(i) + " shape mismatch");
        s.data = enc.skips[i].data;
    }
    bundle.decoder.forward();
    return bundle.decoder.slot(bundle.dec_out);
}

template <typename T>
Tensor<T> classify(ModelBundle<T>& bundle, const Tensor<T>& z) {
    Tensor<T>& zin = bundle.classifier.slot(bundle.cls_z);
    if (z.shape != zin.shape) throw ShapeError("classify: z shape mismatch");
    zin.data = z.data;
    bundle.classifier.forward();
    return bundle.classifier.slot(bundle.cls_probs);
}

TensorF tensor_from_image(const Image& img) {
    TensorF t({img.channels, img.height, img.width});
    for (std::size_t i = 0; i < img.data.size(); ++i) t.data[i] = static_cast<float>(img.data[i]);
    return t;
}

Image image_from_tensor(const TensorF& t) {
    if (t.shape.size() != 3) throw ShapeError("image_from_tensor: tensor must be CHW");
    Image img(t.shape[0], t.shape[1], t.shape[2]);
    for (std::size_t i = 0; i < t.data.size(); ++i) img.data[i] = static_cast<double>(t.data[i]);
    return img;
}

template struct ModelBundle<float>;
template struct ModelBundle<double>;
template ModelBundle<float> build_model<float>(const ArchConfig&);
template ModelBundle<double> build_model<double>(const ArchConfig&);
template void init_model<float>(ModelBundle<float>&, std::uint64_t);
template void init_model<double>(ModelBundle<double>&, std::uint64_t);
template struct Encoded<float>;
template struct Encoded<double>;
template Encoded<float> encode<float>(ModelBundle<float>&, const TensorF&);
template Encoded<double> encode<double>(ModelBundle<double>&, const TensorD&);
template Tensor<float> decode<float>(ModelBundle<float>&, const Encoded<float>&);
template Tensor<double> decode<double>(ModelBundle<double>&, const Encoded<double>&);
template Tensor<float> classify<float>(ModelBundle<float>&, const TensorF&);
template Tensor<double> classify<double>(ModelBundle<double>&, const TensorD&);

}  // namespace uwie
