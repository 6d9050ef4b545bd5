#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdnet/convlstm.hpp"
#include "fdnet/flowdef.hpp"
#include "fdnet/params.hpp"

namespace fdnet {

struct EncoderLayer {
    int in_channels;
    int out_channels;
    int stride;
    friend bool operator==(const EncoderLayer&, const EncoderLayer&) = default;
};

struct DecoderLayer {
    int in_channels;
    int out_channels;
    int stride;
    int output_padding;
    bool norm_act;  // GroupNorm + LeakyReLU after the transposed conv
    friend bool operator==(const DecoderLayer&, const DecoderLayer&) = default;
};

/// The six-stage 3x3 encoder: 1->8->16->32->32->64->64, strides 2,1,2,1,2,1.
std::vector<EncoderLayer> default_encoder();
/// The six-stage 3x3 transposed-conv decoder: 128->64->32->32->16->8->1.
std::vector<DecoderLayer> default_decoder();

struct AblationFlags {
    bool separate_encoders = true;
    bool use_flow_output = true;
    bool use_def_output = true;
    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct ModelConfig {
    int height = 64;
    int width = 64;
    std::vector<EncoderLayer> encoder = default_encoder();
    std::vector<DecoderLayer> decoder = default_decoder();
    int flow_lstm_layers = 1;
    int flow_hidden = 128;
    int flow_head_hidden = 128;
    int def_lstm_layers = 2;
    int def_hidden = 128;
    std::vector<int> def_dilations{1, 2};
    int corr_d = -1;  // < 0: round(feature_width / 3)
    int corr_stride = 1;
    bool corr_normalize = false;
    int feature_channels = 64;
    bool peephole = true;
    double leaky_slope = 0.01;
    double gn_eps = 1e-5;
    AblationFlags ablation;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
    int downsample_factor() const;
    std::int64_t feature_height() const { return height / downsample_factor(); }
    std::int64_t feature_width() const { return width / downsample_factor(); }
    int effective_corr_d() const;
    int cost_volume_channels() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using ModelParams = ParamSet;

/// Xavier-normal conv kernels, zero biases and peepholes, unit GroupNorm
/// scales. Deterministic in `seed`.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Recurrent state carried between steps of one sequence batch.
struct RolloutMemory {
    Var m_prev;  // position features of the previous frame
    Var s_prev;  // shape features of the previous frame
    std::vector<ConvLstmState> flow_states;
    std::vector<ConvLstmState> def_states;

    bool warm() const { return m_prev.valid() && s_prev.valid(); }
};

struct FlowStepOutput {
    std::vector<ConvLstmState> states;
    FlowField flow;
    Var cost_volume;
};

struct DeformStepOutput {
    std::vector<ConvLstmState> states;
    Var delta;   // s_t - warp(s_prev, flow)
    Var d;       // projected deformation features
    Var w_pred;  // warp(s_t, flow)
};

struct StepOutput {
    RolloutMemory memory;
    Var prediction;  // raw decoder output, [N,1,H,W]
    FlowField flow;
    Var d;
    Var w_pred;
};

struct RolloutOptions {
    int horizon = 1;
    /// Ground-truth future frames [N,1,H,W]; required when any mask entry is set.
    std::vector<Var> teacher;
    /// teacher_mask[k] selects teacher[k] instead of prediction k as the input
    /// that produces prediction k+1. Entry horizon-1 is never consulted.
    std::vector<bool> teacher_mask;
    /// Clamp outputs (and fed-back frames) to [0,1]. Inference only.
    bool clamp_output = false;
};

struct RolloutResult {
    /// Predictions made while consuming observed inputs 2..J-1 (of frames 3..J).
    std::vector<Var> warmup;
    /// The `horizon` forecast frames, in order.
    std::vector<Var> predictions;
};

/// FDNet bound to one tape.
class FdNet {
public:
    FdNet(const ModelConfig& config, const BoundParams& params);

    const ModelConfig& config() const { return config_; }
    const BoundParams& params() const { return *params_; }

    Var encode_position(Var x) const;
    Var encode_shape(Var x) const;

    /// Fresh memory with zero recurrent states and no previous features.
    RolloutMemory empty_memory(std::int64_t batch) const;
    /// Encodes the first observed frame; produces no prediction.
    RolloutMemory prime(Var x) const;

    FlowStepOutput flow_step(const RolloutMemory& memory, Var m_t) const;
    DeformStepOutput deform_step(const RolloutMemory& memory, Var s_t, const FlowField& flow) const;
    Var combine_decode(Var d, Var w_pred) const;

    /// One recurrence step consuming x_t and predicting x_{t+1}.
    StepOutput step(const RolloutMemory& memory, Var x_t) const;

    /// J >= 2 observed frames, then `horizon` autoregressive predictions.
    RolloutResult rollout(std::span<const Var> inputs, const RolloutOptions& options) const;

private:
    Var encode(const std::string& prefix, Var x) const;
    ConvLstmVars lstm(const std::string& prefix, int dilation) const;
    void check_frame(Var x) const;

    ModelConfig config_;
    const BoundParams* params_;
};

/// Inference: inputs [J,N,1,H,W] -> clamped predictions [K,N,1,H,W].
Tensor predict(const ModelConfig& config, const ModelParams& params, const Tensor& inputs, int horizon);

}  // namespace fdnet
