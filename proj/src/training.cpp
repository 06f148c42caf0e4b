#include "uwie/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "uwie/metrics.hpp"
#include "uwie/ops.hpp"

namespace uwie {

using nlohmann::json;

const char* epoch_mode_name(EpochMode mode) {
    switch (mode) {
        case EpochMode::WarmupEG: return "WARMUP_EG";
        case EpochMode::AdvEG: return "ADV_EG";
        case EpochMode::TrainD: return "TRAIN_D";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (threshold_g < 0.0 || threshold_g > 1.0 || threshold_d < 0.0 || threshold_d > 1.0)
        throw ConfigError("thresholds must lie in [0,1]");
    if (lambda_adv < 0.0) throw ConfigError("lambda_adv must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (max_warmup_epochs < 0) throw ConfigError("max_warmup_epochs must be >= 0");
    if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

json TrainConfig::to_json() const {
    return json{{"threshold_g", threshold_g},
                {"threshold_d", threshold_d},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"lambda_adv", lambda_adv},
                {"lr", optimizer.lr},
                {"beta1", optimizer.beta1},
                {"beta2", optimizer.beta2},
                {"eps", optimizer.eps},
                {"master_seed", master_seed},
                {"checkpoint_every", checkpoint_every},
                {"max_warmup_epochs", max_warmup_epochs}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.threshold_g = j.value("threshold_g", c.threshold_g);
    c.threshold_d = j.value("threshold_d", c.threshold_d);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
    c.optimizer.lr = j.value("lr", c.optimizer.lr);
    c.optimizer.beta1 = j.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = j.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = j.value("eps", c.optimizer.eps);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.max_warmup_epochs = j.value("max_warmup_epochs", c.max_warmup_epochs);
    c.validate();
    return c;
}

double loss_reconstruction(std::span<const float> output, std::span<const float> target) {
    if (output.size() != target.size()) throw ShapeError("loss_reconstruction: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = static_cast<double>(output[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(output.size());
}

static void check_distribution(std::span<const float> probs) {
    double sum = 0.0;
    for (float p : probs) {
        if (!(p >= 0.0f) || !std::isfinite(p)) throw NumericError("probabilities must be finite and >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-4) throw NumericError("probabilities do not sum to 1");
}

double loss_nuisance(std::span<const float> probs, int class_id) {
    check_distribution(probs);
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= probs.size())
        throw InvalidInputError("class_id out of range");
    const double p = std::max(static_cast<double>(probs[static_cast<std::size_t>(class_id)]),
                              ops::kProbFloor);
    return -std::log(p);
}

double loss_adversarial(std::span<const float> probs) {
    check_distribution(probs);
    double acc = 0.0;
    for (float pf : probs) {
        const double p = static_cast<double>(pf);
        if (p > 0.0) acc += p * std::log(p);
    }
    return acc;
}

EpochMode decide_epoch_mode(double val_g, double val_d, const TrainConfig& config) {
    if (!(val_g >= 0.0 && val_g <= 1.0) || !(val_d >= 0.0 && val_d <= 1.0))
        throw InvalidInputError("validation scores must lie in [0,1]");
    if (val_g < config.threshold_g) return EpochMode::AdvEG;
    if (val_d < config.threshold_d) return EpochMode::TrainD;
    return EpochMode::AdvEG;
}

Dataset load_dataset(const std::string& manifest_path) {
    const auto entries = read_manifest(manifest_path);
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

    Dataset data;
    for (const ManifestEntry& e : entries) {
        Sample s;
        s.degraded = tensor_from_image(read_png_rgb((base / e.degraded_path).string()));
        s.clear = tensor_from_image(read_png_rgb((base / e.clear_path).string()));
        s.class_id = e.class_id;
        s.scene_id = e.scene_id;
        if (e.split == "train")
            data.train.push_back(std::move(s));
        else if (e.split == "val")
            data.val.push_back(std::move(s));
        else
            data.test.push_back(std::move(s));
    }
    return data;
}

void TrainerState::init_like(const ModelBundleF& bundle) {
    opt_enc.init_like(bundle.encoder);
    opt_dec.init_like(bundle.decoder);
    opt_cls.init_like(bundle.classifier);
    grad_enc.init_like(bundle.encoder);
    grad_dec.init_like(bundle.decoder);
    grad_cls.init_like(bundle.classifier);
}

namespace {

// Copies encoder outputs (Z + skips) into the decoder/classifier input slots.
void stage_decoder_inputs(ModelBundleF& m) {
    m.decoder.slot(m.dec_z).data = m.encoder.slot(m.enc_z).data;
    for (std::size_t i = 0; i < m.enc_skips.size(); ++i)
        m.decoder.slot(m.dec_skips[i]).data = m.encoder.slot(m.enc_skips[i]).data;
}

void stage_classifier_input(ModelBundleF& m) {
    m.classifier.slot(m.cls_z).data = m.encoder.slot(m.enc_z).data;
}

}  // namespace

LossValues apply_routed_update(ModelBundleF& m, TrainerState& state,
                               std::span<const Sample* const> batch, EpochMode mode,
                               const TrainConfig& config) {
    if (batch.empty()) throw InvalidInputError("empty batch");
    if (!state.opt_enc.initialized()) state.init_like(m);

    const bool eg_step = mode == EpochMode::WarmupEG || mode == EpochMode::AdvEG;
    const bool adversarial = mode == EpochMode::AdvEG && config.lambda_adv > 0.0;
    const bool want_classifier = adversarial || mode == EpochMode::TrainD;
    const int M = m.config.num_classes;

    // Routing contract: every gradient buffer starts exactly zero, and only
    // the buffers for the updated subnetworks are ever written below.
    m.encoder.zero_param_grads();
    m.decoder.zero_param_grads();
    m.classifier.zero_param_grads();
    state.grad_enc.zero();
    state.grad_dec.zero();
    state.grad_cls.zero();

    double sum_lr = 0.0, sum_ln = 0.0, sum_la = 0.0;
    std::vector<float> onehot(static_cast<std::size_t>(M));

    for (const Sample* sample : batch) {
        m.encoder.slot(m.enc_in).data = sample->degraded.data;
        m.encoder.forward();

        // Reconstruction path (also evaluated forward-only in TrainD epochs
        // so the log always carries L_R).
        stage_decoder_inputs(m);
        m.decoder.forward();
        TensorF& out = m.decoder.slot(m.dec_out);
        const double l_r = loss_reconstruction(out.data, sample->clear.data);
        sum_lr += l_r;

        double l_n = 0.0, l_a = 0.0;
        if (want_classifier) {
            stage_classifier_input(m);
            m.classifier.forward();
            const TensorF& probs = m.classifier.slot(m.cls_probs);
            l_n = loss_nuisance(probs.data, sample->class_id);
            l_a = loss_adversarial(probs.data);
        }
        sum_ln += l_n;
        sum_la += l_a;

        if (!std::isfinite(l_r) || !std::isfinite(l_n) || !std::isfinite(l_a))
            throw NumericError("non-finite loss on scene '" + sample->scene_id + "'");

        if (eg_step) {
            // dL_R/d(output), then through G into (Z, skips).
            out.zero_grad();
            ops::mse_backward(out.data.data(), sample->clear.data.data(), out.numel(), 1.0f,
                              out.grad.data(), static_cast<float*>(nullptr));
            m.decoder.backward(true);
            state.grad_dec.add_from(m.decoder);

            // Seed encoder output grads: reconstruction term...
            TensorF& z_out = m.encoder.slot(m.enc_z);
            z_out.zero_grad();
            const auto& dz_rec = m.decoder.slot(m.dec_z).grad;
            for (std::size_t i = 0; i < z_out.grad.size(); ++i) z_out.grad[i] = dz_rec[i];
            for (std::size_t si = 0; si < m.enc_skips.size(); ++si) {
                TensorF& skip = m.encoder.slot(m.enc_skips[si]);
                skip.zero_grad();
                const auto& ds = m.decoder.slot(m.dec_skips[si]).grad;
                for (std::size_t i = 0; i < skip.grad.size(); ++i) skip.grad[i] = ds[i];
            }

            // ...plus lambda * dL_A/dZ with D frozen (forward-only role).
            if (adversarial) {
                TensorF& probs = m.classifier.slot(m.cls_probs);
                probs.zero_grad();
                ops::neg_entropy_backward(probs.data.data(), M,
                                          static_cast<float>(config.lambda_adv), probs.grad.data());
                m.classifier.backward(/*accumulate_param_grads=*/false);
                const auto& dz_adv = m.classifier.slot(m.cls_z).grad;
                for (std::size_t i = 0; i < z_out.grad.size(); ++i) z_out.grad[i] += dz_adv[i];
            }

            m.encoder.backward(true);
            state.grad_enc.add_from(m.encoder);
        } else {  // TrainD: Z is a constant input to D
            std::fill(onehot.begin(), onehot.end(), 0.0f);
            onehot[static_cast<std::size_t>(sample->class_id)] = 1.0f;
            TensorF& probs = m.classifier.slot(m.cls_probs);
            probs.zero_grad();
            ops::cross_entropy_backward(probs.data.data(), onehot.data(), M, 1.0f,
                                        probs.grad.data(), static_cast<float*>(nullptr));
            m.classifier.backward(true);
            state.grad_cls.add_from(m.classifier);
        }
    }

    const float inv_n = 1.0f / static_cast<float>(batch.size());
    if (eg_step) {
        state.grad_enc.scale(inv_n);
        state.grad_dec.scale(inv_n);
        adam_step(m.encoder, state.opt_enc, config.optimizer, state.grad_enc.sums);
        adam_step(m.decoder, state.opt_dec, config.optimizer, state.grad_dec.sums);
    } else {
        state.grad_cls.scale(inv_n);
        adam_step(m.classifier, state.opt_cls, config.optimizer, state.grad_cls.sums);
    }

    const double n = static_cast<double>(batch.size());
    return LossValues{sum_lr / n, sum_ln / n, sum_la / n};
}

double validation_ssim(ModelBundleF& m, std::span<const Sample> samples) {
    if (samples.empty()) throw InvalidInputError("empty validation set");
    std::vector<double> scores(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        m.encoder.slot(m.enc_in).data = samples[i].degraded.data;
        m.encoder.forward();
        stage_decoder_inputs(m);
        m.decoder.forward();
        const Image out = image_from_tensor(m.decoder.slot(m.dec_out));
        const Image target = image_from_tensor(samples[i].clear);
        scores[i] = ssim(out, target);
    }
    return mean(scores);
}

double validation_accuracy(ModelBundleF& m, std::span<const Sample> samples) {
    if (samples.empty()) throw InvalidInputError("empty validation set");
    std::size_t correct = 0;
    for (const Sample& s : samples) {
        m.encoder.slot(m.enc_in).data = s.degraded.data;
        m.encoder.forward();
        stage_classifier_input(m);
        m.classifier.forward();
        const auto& probs = m.classifier.slot(m.cls_probs).data;
        const std::size_t arg = static_cast<std::size_t>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        if (arg == static_cast<std::size_t>(s.class_id)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

LossValues run_one_epoch(ModelBundleF& m, TrainerState& state, const Dataset& data,
                         const TrainConfig& config, EpochMode mode, std::uint64_t shuffle_seed) {
    std::vector<const Sample*> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = &data.train[i];
    Rng rng(shuffle_seed);
    shuffle(std::span<const Sample*>(order), rng);

    double sum_lr = 0.0, sum_ln = 0.0, sum_la = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
        const std::size_t n = std::min(static_cast<std::size_t>(config.batch_size),
                                       order.size() - done);
        const LossValues lv = apply_routed_update(
            m, state, std::span<const Sample* const>(order.data() + done, n), mode, config);
        sum_lr += lv.reconstruction * static_cast<double>(n);
        sum_ln += lv.nuisance * static_cast<double>(n);
        sum_la += lv.adversarial * static_cast<double>(n);
        done += n;
    }
    const double total = static_cast<double>(order.size());
    return LossValues{sum_lr / total, sum_ln / total, sum_la / total};
}

}  // namespace

WarmupResult run_warmup(ModelBundleF& m, TrainerState& state, const Dataset& data,
                        const TrainConfig& config, TrainProgress& progress) {
    config.validate();
    if (data.train.empty() || data.val.empty())
        throw ConfigError("warmup requires nonempty train and val splits");
    if (!state.opt_enc.initialized()) state.init_like(m);

    WarmupResult result;
    progress.val_g = validation_ssim(m, data.val);
    result.best_val_g = progress.val_g;

    while (progress.val_g < config.threshold_g && result.epochs_run < config.max_warmup_epochs) {
        const LossValues lv =
            run_one_epoch(m, state, data, config, EpochMode::WarmupEG,
                          derive_seed(config.master_seed, "shuffle.warmup",
                                      static_cast<std::uint64_t>(result.epochs_run)));
        ++result.epochs_run;
        progress.val_g = validation_ssim(m, data.val);
        result.best_val_g = std::max(result.best_val_g, progress.val_g);
        result.log.push_back({result.epochs_run - 1, EpochMode::WarmupEG, progress.val_g,
                              progress.val_d, lv});
    }

    result.reached_threshold = progress.val_g >= config.threshold_g;
    if (!result.reached_threshold)
        std::fprintf(stderr,
                     "warning: warmup guard tripped after %d epochs (best val_G %.4f < %.4f); "
                     "continuing to the main loop\n",
                     result.epochs_run, result.best_val_g, config.threshold_g);

    progress.val_d = validation_accuracy(m, data.val);
    progress.warmup_done = true;
    return result;
}

TrainResult run_training(ModelBundleF& m, TrainerState& state, const Dataset& data,
                         const TrainConfig& config, TrainProgress& progress,
                         const CheckpointSink& sink) {
    config.validate();
    if (!progress.warmup_done) throw StateError("run_training requires completed warmup");
    if (data.train.empty() || data.val.empty())
        throw ConfigError("training requires nonempty train and val splits");
    if (!state.opt_enc.initialized()) state.init_like(m);

    TrainResult result;
    for (int epoch = progress.next_epoch; epoch < config.epochs; ++epoch) {
        // With the adversarial weight at zero every epoch is a plain
        // reconstruction epoch; the classifier never enters the loss path.
        const EpochMode mode = config.lambda_adv == 0.0
                                   ? EpochMode::AdvEG
                                   : decide_epoch_mode(progress.val_g, progress.val_d, config);
        const LossValues lv =
            run_one_epoch(m, state, data, config, mode,
                          derive_seed(config.master_seed, "shuffle.main",
                                      static_cast<std::uint64_t>(epoch)));
        progress.val_g = validation_ssim(m, data.val);
        progress.val_d = validation_accuracy(m, data.val);
        progress.next_epoch = epoch + 1;

        result.log.push_back({epoch, mode, progress.val_g, progress.val_d, lv});
        if (sink && ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.epochs))
            sink(m, state, config, progress);
    }
    result.val_g = progress.val_g;
    result.val_d = progress.val_d;
    return result;
}

void write_epoch_log_csv(const std::string& path, std::span<const EpochLogEntry> log) {
    std::ostringstream out;
    out << "epoch,mode,val_g,val_d,loss_r,loss_n,loss_a\n";
    out.precision(9);
    for (const auto& e : log)
        out << e.epoch << ',' << epoch_mode_name(e.mode) << ',' << e.val_g << ',' << e.val_d << ','
            << e.losses.reconstruction << ',' << e.losses.nuisance << ',' << e.losses.adversarial
            << '\n';
    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp);
    f << out.str();
    f.close();
    std::filesystem::rename(tmp, path);
}

namespace {

void append_graph_tensors(const Graph<float>& g, const AdamState<float>& opt,
                          std::vector<NamedTensor>& out) {
    const auto params = g.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = g.slot(params[i]);
        const std::string& name = g.slot_name(params[i]);
        out.push_back({name, t.shape, t.data});
        out.push_back({"opt.m." + name, t.shape, opt.m[i]});
        out.push_back({"opt.v." + name, t.shape, opt.v[i]});
    }
}

void restore_graph_tensors(Graph<float>& g, AdamState<float>& opt,
                           const std::map<std::string, const NamedTensor*>& index,
                           std::int64_t t_steps) {
    opt.init_like(g);
    opt.t = t_steps;
    const auto params = g.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = g.slot_name(params[i]);
        for (const char* prefix : {"", "opt.m.", "opt.v."}) {
            const auto it = index.find(std::string(prefix) + name);
            if (it == index.end())
                throw FormatError("checkpoint missing tensor '" + std::string(prefix) + name + "'");
            const NamedTensor& src = *it->second;
            auto& t = g.slot(params[i]);
            if (src.shape != t.shape)
                throw FormatError("checkpoint tensor '" + src.name + "' has shape " +
                                  shape_str(src.shape) + ", expected " + shape_str(t.shape));
            if (prefix[0] == '\0')
                t.data = src.values;
            else if (prefix[4] == 'm')
                opt.m[i] = src.values;
            else
                opt.v[i] = src.values;
        }
    }
}

}  // namespace

CheckpointData make_checkpoint(const ModelBundleF& m, const TrainerState& state,
                               const TrainConfig& config, const TrainProgress& progress) {
    CheckpointData ckpt;
    ckpt.config = json{{"format_version", 1},
                       {"arch", m.config.to_json()},
                       {"train_config", config.to_json()},
                       {"state",
                        {{"epochs_done", progress.next_epoch},
                         {"warmup_done", progress.warmup_done},
                         {"master_seed", config.master_seed},
                         {"val_g_bits", double_to_bits(progress.val_g)},
                         {"val_d_bits", double_to_bits(progress.val_d)},
                         {"adam_t_enc", state.opt_enc.t},
                         {"adam_t_dec", state.opt_dec.t},
                         {"adam_t_cls", state.opt_cls.t}}}};
    append_graph_tensors(m.encoder, state.opt_enc, ckpt.tensors);
    append_graph_tensors(m.decoder, state.opt_dec, ckpt.tensors);
    append_graph_tensors(m.classifier, state.opt_cls, ckpt.tensors);
    return ckpt;
}

RestoredTraining restore_training(const CheckpointData& ckpt) {
    if (ckpt.config.value("format_version", -1) != 1)
        throw FormatError("unsupported checkpoint format_version");

    RestoredTraining r;
    const ArchConfig arch = ArchConfig::from_json(ckpt.config.at("arch"));
    r.config = TrainConfig::from_json(ckpt.config.at("train_config"));
    r.bundle = build_model<float>(arch);

    std::map<std::string, const NamedTensor*> index;
    for (const NamedTensor& t : ckpt.tensors) {
        if (!index.emplace(t.name, &t).second)
            throw FormatError("duplicate tensor '" + t.name + "' in checkpoint");
    }
    const std::size_t expected = (r.bundle.encoder.params().size() +
                                  r.bundle.decoder.params().size() +
                                  r.bundle.classifier.params().size()) * 3;
    if (index.size() != expected)
        throw FormatError("checkpoint tensor count " + std::to_string(index.size()) +
                          " does not match architecture (expected " + std::to_string(expected) + ")");

    const json& st = ckpt.config.at("state");
    restore_graph_tensors(r.bundle.encoder, r.state.opt_enc, index, st.at("adam_t_enc").get<std::int64_t>());
    restore_graph_tensors(r.bundle.decoder, r.state.opt_dec, index, st.at("adam_t_dec").get<std::int64_t>());
    restore_graph_tensors(r.bundle.classifier, r.state.opt_cls, index, st.at("adam_t_cls").get<std::int64_t>());
    r.state.grad_enc.init_like(r.bundle.encoder);
    r.state.grad_dec.init_like(r.bundle.decoder);
    r.state.grad_cls.init_like(r.bundle.classifier);

    r.progress.next_epoch = st.at("epochs_done").get<int>();
    r.progress.warmup_done = st.at("warmup_done").get<bool>();
    r.progress.val_g = bits_to_double(st.at("val_g_bits").get<std::uint64_t>());
    r.progress.val_d = bits_to_double(st.at("val_d_bits").get<std::uint64_t>());
    return r;
}

}  // namespace uwie
