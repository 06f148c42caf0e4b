#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwie/datastore.hpp"
#include "uwie/models.hpp"

namespace uwie {

// Epoch-level regime: warmup trains E+G on reconstruction only; ADV_EG adds
// the entropy term on E with D frozen; TRAIN_D refreshes D on frozen latents.
enum class EpochMode { WarmupEG, AdvEG, TrainD };
const char* epoch_mode_name(EpochMode mode);

struct LossValues {
    double reconstruction = 0.0;  // >= 0
    double nuisance = 0.0;        // >= 0
    double adversarial = 0.0;     // in [-ln M, 0]
};

struct TrainConfig {
    double threshold_g = 0.9;
    double threshold_d = 0.85;
    int epochs = 200;
    int batch_size = 16;
    double lambda_adv = 1.0;  // 0 disables the classifier path entirely
    AdamConfig optimizer;
    std::uint64_t master_seed = 1;
    int checkpoint_every = 25;
    int max_warmup_epochs = 1000;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Standalone loss functions (double precision, same definitions the training
// step applies through the graphs).
double loss_reconstruction(std::span<const float> output, std::span<const float> target);
double loss_nuisance(std::span<const float> probs, int class_id);
double loss_adversarial(std::span<const float> probs);

// Algorithm branch: val_g below threshold_g -> adversarial E+G epoch; else a
// weak classifier (val_d below threshold_d) -> classifier epoch; else
// adversarial E+G. Strict less-than on both comparisons.
EpochMode decide_epoch_mode(double val_g, double val_d, const TrainConfig& config);

struct Sample {
    TensorF degraded;
    TensorF clear;
    int class_id = 0;
    std::string scene_id;
};

struct Dataset {
    std::vector<Sample> train, val, test;
};

// Reads every manifest entry's PNG pair into memory, grouped by split.
Dataset load_dataset(const std::string& manifest_path);

// Optimizer state and gradient accumulators for the three networks.
struct TrainerState {
    AdamState<float> opt_enc, opt_dec, opt_cls;
    GradBuffer<float> grad_enc, grad_dec, grad_cls;

    void init_like(const ModelBundleF& bundle);
};

// One batch step under the given mode's routing contract:
//   WarmupEG  E,G <- grad(L_R); D untouched (not even run)
//   AdvEG     E <- grad(L_R + lambda*L_A), G <- grad(L_R); D forward-only,
//             its parameter gradients stay exactly zero
//   TrainD    D <- grad(L_N) with Z treated as a constant; E,G untouched
// Returns batch-mean losses. With lambda_adv == 0 the classifier is skipped
// entirely, making the step bitwise identical to a classifier-free build.
LossValues apply_routed_update(ModelBundleF& bundle, TrainerState& state,
                               std::span<const Sample* const> batch, EpochMode mode,
                               const TrainConfig& config);

// Mean validation SSIM of G's output vs ground truth (val_G).
double validation_ssim(ModelBundleF& bundle, std::span<const Sample> samples);
// Validation classification accuracy of D on current latents (val_D).
double validation_accuracy(ModelBundleF& bundle, std::span<const Sample> samples);

struct EpochLogEntry {
    int epoch = 0;
    EpochMode mode = EpochMode::WarmupEG;
    double val_g = 0.0;
    double val_d = 0.0;
    LossValues losses;
};

void write_epoch_log_csv(const std::string& path, std::span<const EpochLogEntry> log);

struct TrainProgress {
    int next_epoch = 0;
    double val_g = 0.0;
    double val_d = 0.0;
    bool warmup_done = false;
};

struct WarmupResult {
    int epochs_run = 0;
    double best_val_g = 0.0;
    bool reached_threshold = false;
    std::vector<EpochLogEntry> log;
};

// Reconstruction-only warmup until val_G >= threshold_g, bounded by
// max_warmup_epochs. Tripping the guard is a warning, not an error; the
// caller proceeds to the main loop either way. D is never touched.
WarmupResult run_warmup(ModelBundleF& bundle, TrainerState& state, const Dataset& data,
                        const TrainConfig& config, TrainProgress& progress);

using CheckpointSink =
    std::function<void(const ModelBundleF&, const TrainerState&, const TrainConfig&,
                       const TrainProgress&)>;

struct TrainResult {
    std::vector<EpochLogEntry> log;  // exactly the epochs run in the main loop
    double val_g = 0.0;
    double val_d = 0.0;
};

// The n-epoch gated loop. Per epoch: pick the mode from the latest
// (val_g, val_d), run all batches under that routing, re-evaluate both
// validation scores, log, and checkpoint every checkpoint_every epochs.
// Deterministic for a given master seed; batch order is drawn from seeds
// derived per epoch, so resuming from a checkpoint replays identically.
TrainResult run_training(ModelBundleF& bundle, TrainerState& state, const Dataset& data,
                         const TrainConfig& config, TrainProgress& progress,
                         const CheckpointSink& sink = nullptr);

// Checkpoint conversion. Parameter tensors are named by graph ("enc.*",
// "dec.*", "cls.*"); Adam moments ride along as "opt.m.<name>"/"opt.v.<name>";
// scalars that feed threshold comparisons are stored as exact bit patterns.
CheckpointData make_checkpoint(const ModelBundleF& bundle, const TrainerState& state,
                               const TrainConfig& config, const TrainProgress& progress);

struct RestoredTraining {
    ModelBundleF bundle;
    TrainerState state;
    TrainConfig config;
    TrainProgress progress;
};

RestoredTraining restore_training(const CheckpointData& ckpt);

}  // namespace uwie
