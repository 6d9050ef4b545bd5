#pragma once

// Optimization: ADAM, gradient clipping, the training loop and checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdnet/data.hpp"
#include "fdnet/loss.hpp"
#include "fdnet/metrics.hpp"
#include "fdnet/model.hpp"

namespace fdnet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
    AdamConfig hyper;
    ParamSet m;
    ParamSet v;
    std::int64_t step = 0;

    static AdamState init(const ParamSet& params, const AdamConfig& hyper);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
/// theta <- theta - lr * mhat / (sqrt(vhat) + eps) with bias-corrected moments.
void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads);

/// sqrt of the sum of squares over every gradient tensor.
double global_norm(const ParamSet& grads);

/// Rescales all gradients by clip_value/g when the global norm g exceeds
/// clip_value. Returns g. Non-finite gradients throw NumericError.
double clip_gradients(ParamSet& grads, double clip_value);

/// Per-element clamp to [-clip_value, clip_value]. Returns the pre-clip global norm.
double clip_gradient_values(ParamSet& grads, double clip_value);

enum class ClipMode { kGlobalNorm, kValue };

struct TrainConfig {
    std::int64_t max_iterations = 2000;
    int batch_size = 4;
    int input_frames = 4;   // J
    int horizon = 6;        // K
    int window_stride = 1;
    AdamConfig adam;
    double clip_value = 50.0;
    ClipMode clip_mode = ClipMode::kGlobalNorm;
    LossConfig loss;
    WeightScheme weights = WeightScheme::normalized();
    SamplingSchedule sampling{1.0, 0.0, 0};  // decay_steps 0: half of max_iterations
    /// Include predictions made while consuming inputs 3..J in the loss.
    bool warmup_loss = true;
    std::int64_t eval_every = 0;       // 0: no periodic validation
    std::int64_t eval_max_windows = 32;
    std::int64_t checkpoint_every = 0; // 0: only last and best
    std::string checkpoint_dir;        // empty: no checkpoint files
    std::uint64_t seed = 0;

    void validate() const;
    SamplingSchedule effective_sampling() const;
};

struct LogRow {
    std::int64_t iteration = 0;
    std::string split;  // "train" or "val"
    double loss_pixel = 0.0;
    double loss_gdl = 0.0;
    double loss_total = 0.0;
    double p_teacher = 0.0;
    double grad_norm = 0.0;  // train rows only
    double bmse = 0.0;       // val rows only: mean over lead steps

    friend bool operator==(const LogRow&, const LogRow&) = default;
};

/// iteration, split, loss_pixel, loss_gdl, loss_total, p_teacher
void write_log_csv(std::ostream& os, const std::vector<LogRow>& rows);

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelConfig model;
    std::string model_digest;
    std::string train_digest;
    std::string loss_digest;
    ParamSet params;
    AdamState adam;
    std::int64_t iteration = 0;
    double best_val_bmse = -1.0;  // < 0: none recorded

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Tensors are stored as f64 records so that save/load is bitwise.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Refuses files with a bad magic, version, checksum or truncated body.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Throws ConfigError when `ckpt` was written for a different model
/// configuration, unless `force`.
void require_compatible(const Checkpoint& ckpt, const ModelConfig& model, bool force = false);

struct Dataset {
    std::vector<Sequence> train;
    std::vector<Sequence> val;
};

struct TrainResult {
    Checkpoint last;
    std::optional<Checkpoint> best;
    std::vector<LogRow> log;
};

/// Called after every logged row; returning false stops training.
using TrainCallback = std::function<bool(const LogRow&)>;

/// The windows for iteration `iteration` (1-based): epoch-wise seeded
/// permutations of all windows, consumed batch_size at a time.
std::vector<std::size_t> batch_picks(std::int64_t iteration, int batch_size, std::size_t num_windows,
                                     std::uint64_t seed);

/// Loss of one batch rollout, recorded on `tape`. Predictions are unclamped.
LossTerms rollout_loss(const FdNet& net, const Batch& batch, const std::vector<bool>& teacher_mask,
                       const TrainConfig& cfg);

/// Runs iterations (resume->iteration, cfg.max_iterations]. Without
/// `resume`, parameters come from init_params(model, cfg.seed).
TrainResult train(const TrainConfig& cfg, const ModelConfig& model, const Dataset& data,
                  const std::optional<Checkpoint>& resume = std::nullopt, const TrainCallback& callback = {});

/// Clamped rollouts over `windows` (at most max_windows of them), scored in
/// the normalized domain.
SkillReport evaluate_windows(const ModelConfig& model, const ParamSet& params, const std::vector<Sequence>& seqs,
                             int J, int K, const std::vector<double>& thresholds, const WeightScheme& scheme,
                             std::int64_t max_windows = -1);

}  // namespace fdnet
