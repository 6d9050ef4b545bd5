#include "fdnet/model.hpp"

#include <random>

#include "fdnet/errors.hpp"
#include "init.hpp"

namespace fdnet {

std::vector<EncoderLayer> default_encoder() {
    return {{1, 8, 2}, {8, 16, 1}, {16, 32, 2}, {32, 32, 1}, {32, 64, 2}, {64, 64, 1}};
}

std::vector<DecoderLayer> default_decoder() {
    return {{128, 64, 1, 0, true}, {64, 32, 2, 1, true}, {32, 32, 1, 0, true},
            {32, 16, 2, 1, true},  {16, 8, 1, 0, true},  {8, 1, 2, 1, false}};
}

namespace {

void fail(const std::string& field, const std::string& why) { throw ConfigError("model." + field + ": " + why); }

std::string enc_name(const std::string& prefix, std::size_t i) {
    return prefix + ".econv" + std::to_string(i + 1);
}

std::string dec_name(std::size_t i) { return "dec.dconv" + std::to_string(i + 1); }

std::string lstm_name(const std::string& prefix, int layer) { return prefix + ".lstm" + std::to_string(layer + 1); }

}  // namespace

int ModelConfig::downsample_factor() const {
    int f = 1;
    for (const auto& l : encoder) f *= l.stride;
    return f;
}

void ModelConfig::validate() const {
    if (encoder.empty()) fail("encoder", "at least one layer required");
    if (decoder.empty()) fail("decoder", "at least one layer required");
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        const auto& l = encoder[i];
        if (l.in_channels < 1 || l.out_channels < 1 || l.stride < 1)
            fail("encoder[" + std::to_string(i) + "]", "channels and stride must be positive");
        if (i == 0 ? l.in_channels != 1 : l.in_channels != encoder[i - 1].out_channels)
            fail("encoder[" + std::to_string(i) + "].in_channels", "does not chain with the previous layer");
    }
    if (encoder.back().out_channels != feature_channels)
        fail("feature_channels", "must equal the last encoder layer's output channels");
    for (std::size_t i = 0; i < decoder.size(); ++i) {
        const auto& l = decoder[i];
        if (l.in_channels < 1 || l.out_channels < 1 || l.stride < 1)
            fail("decoder[" + std::to_string(i) + "]", "channels and stride must be positive");
        if (l.output_padding < 0 || l.output_padding >= l.stride)
            fail("decoder[" + std::to_string(i) + "].output_padding", "must satisfy 0 <= output_padding < stride");
        if (i == 0 ? l.in_channels != 2 * feature_channels : l.in_channels != decoder[i - 1].out_channels)
            fail("decoder[" + std::to_string(i) + "].in_channels", "does not chain with the previous layer");
        if (l.norm_act && l.out_channels % default_groups(l.out_channels) != 0)
            fail("decoder[" + std::to_string(i) + "].out_channels", "not divisible by its GroupNorm groups");
    }
    if (decoder.back().out_channels != 1) fail("decoder", "last layer must output one channel");
    for (std::size_t i = 0; i < encoder.size(); ++i)
        if (encoder[i].out_channels % default_groups(encoder[i].out_channels) != 0)
            fail("encoder[" + std::to_string(i) + "].out_channels", "not divisible by its GroupNorm groups");
    if (height < 1 || width < 1) fail("input_size", "must be positive");
    const int f = downsample_factor();
    if (height % f != 0 || width % f != 0)
        fail("input_size", "height and width must be divisible by " + std::to_string(f));
    int up = 1;
    for (const auto& l : decoder) up *= l.stride;
    if (up != f) fail("decoder", "total upsampling must equal the encoder's downsampling");
    if (flow_lstm_layers < 1) fail("flow_lstm_layers", "must be >= 1");
    if (flow_hidden < 1) fail("flow_hidden", "must be positive");
    if (flow_head_hidden < 1) fail("flow_head_hidden", "must be positive");
    if (def_lstm_layers < 0) fail("def_lstm_layers", "must be >= 0");
    if (def_hidden < 1) fail("def_hidden", "must be positive");
    if (static_cast<int>(def_dilations.size()) != def_lstm_layers)
        fail("def_dilations", "needs one entry per deformation ConvLSTM layer");
    for (int d : def_dilations)
        if (d < 1) fail("def_dilations", "entries must be >= 1");
    if (corr_stride < 1) fail("corr_stride", "must be >= 1");
    if (feature_channels < 1) fail("feature_channels", "must be positive");
    if (!(leaky_slope >= 0.0)) fail("leaky_slope", "must be non-negative");
    if (!(gn_eps > 0.0)) fail("gn_eps", "must be positive");
    if (!ablation.use_flow_output && !ablation.use_def_output)
        fail("ablation", "use_flow_output and use_def_output cannot both be false");
}

int ModelConfig::effective_corr_d() const {
    return corr_d >= 0 ? corr_d : default_max_displacement(feature_width());
}

int ModelConfig::cost_volume_channels() const { return corr_channels(effective_corr_d(), corr_stride); }

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    const auto fh = config.feature_height(), fw = config.feature_width();

    auto add_conv = [&](const std::string& name, int out, int in, int k) {
        Tensor w({out, in, k, k});
        detail::xavier_normal_blocks(w, 1, rng);
        p.add(name + ".weight", std::move(w));
        p.add(name + ".bias", Tensor::zeros({out}));
    };
    auto add_norm = [&](const std::string& name, int channels) {
        p.add(name + ".gn.gamma", Tensor::ones({channels}));
        p.add(name + ".gn.beta", Tensor::zeros({channels}));
    };
    auto add_encoder = [&](const std::string& prefix) {
        for (std::size_t i = 0; i < config.encoder.size(); ++i) {
            const auto& l = config.encoder[i];
            add_conv(enc_name(prefix, i), l.out_channels, l.in_channels, 3);
            add_norm(enc_name(prefix, i), l.out_channels);
        }
    };
    auto add_lstm = [&](const std::string& name, int in, int hidden, int dilation) {
        auto lp = make_convlstm_params(in, hidden, fh, fw, dilation, config.peephole);
        xavier_init(lp, rng);
        p.add(name + ".w_x", std::move(lp.w_x));
        p.add(name + ".w_h", std::move(lp.w_h));
        p.add(name + ".bias", std::move(lp.bias));
        if (config.peephole) {
            p.add(name + ".w_ci", std::move(lp.w_ci));
            p.add(name + ".w_cf", std::move(lp.w_cf));
            p.add(name + ".w_co", std::move(lp.w_co));
        }
    };

    if (config.ablation.separate_encoders) {
        add_encoder("pos");
        add_encoder("shape");
    } else {
        add_encoder("enc");
    }
    for (int l = 0; l < config.flow_lstm_layers; ++l)
        add_lstm(lstm_name("flow", l), l == 0 ? config.cost_volume_channels() : config.flow_hidden, config.flow_hidden, 1);
    add_conv("flow.head1", config.flow_head_hidden, config.flow_hidden, 3);
    add_conv("flow.head2", 2, config.flow_head_hidden, 3);
    for (int l = 0; l < config.def_lstm_layers; ++l)
        add_lstm(lstm_name("def", l), l == 0 ? config.feature_channels : config.def_hidden, config.def_hidden,
                 config.def_dilations[static_cast<std::size_t>(l)]);
    add_conv("def.head", config.feature_channels, config.def_lstm_layers > 0 ? config.def_hidden : config.feature_channels,
             1);
    add_conv("comb", 2 * config.feature_channels, 2 * config.feature_channels, 1);
    for (std::size_t i = 0; i < config.decoder.size(); ++i) {
        const auto& l = config.decoder[i];
        Tensor w({l.in_channels, l.out_channels, 3, 3});
        detail::xavier_normal_transposed(w, rng);
        p.add(dec_name(i) + ".weight", std::move(w));
        p.add(dec_name(i) + ".bias", Tensor::zeros({l.out_channels}));
        if (l.norm_act) add_norm(dec_name(i), l.out_channels);
    }
    return p;
}

FdNet::FdNet(const ModelConfig& config, const BoundParams& params) : config_(config), params_(&params) {
    config_.validate();
}

void FdNet::check_frame(Var x) const {
    const Shape expect{x.dim(0), 1, config_.height, config_.width};
    if (x.value().rank() != 4 || x.shape() != expect)
        throw ShapeError("FDNet expects frames shaped [N,1," + std::to_string(config_.height) + "," +
                         std::to_string(config_.width) + "], got " + shape_str(x.shape()));
}

Var FdNet::encode(const std::string& prefix, Var x) const {
    check_frame(x);
    const auto& p = *params_;
    Var h = x;
    for (std::size_t i = 0; i < config_.encoder.size(); ++i) {
        const auto& l = config_.encoder[i];
        const auto name = enc_name(prefix, i);
        h = conv2d(h, p[name + ".weight"], p[name + ".bias"], Conv2dOptions{{l.stride, l.stride}, {1, 1}, {1, 1}});
        h = group_norm(h, default_groups(l.out_channels), p[name + ".gn.gamma"], p[name + ".gn.beta"], config_.gn_eps);
        h = leaky_relu(h, config_.leaky_slope);
    }
    return h;
}

Var FdNet::encode_position(Var x) const {
    return encode(config_.ablation.separate_encoders ? "pos" : "enc", x);
}

Var FdNet::encode_shape(Var x) const { return encode(config_.ablation.separate_encoders ? "shape" : "enc", x); }

ConvLstmVars FdNet::lstm(const std::string& prefix, int dilation) const {
    const auto& p = *params_;
    ConvLstmVars v;
    v.w_x = p[prefix + ".w_x"];
    v.w_h = p[prefix + ".w_h"];
    v.bias = p[prefix + ".bias"];
    v.peephole = config_.peephole;
    if (v.peephole) {
        v.w_ci = p[prefix + ".w_ci"];
        v.w_cf = p[prefix + ".w_cf"];
        v.w_co = p[prefix + ".w_co"];
    }
    v.hidden = static_cast<int>(v.w_h.dim(1));
    v.dilation = dilation;
    return v;
}

RolloutMemory FdNet::empty_memory(std::int64_t batch) const {
    RolloutMemory m;
    Tape& tape = params_->tape();
    const auto fh = config_.feature_height(), fw = config_.feature_width();
    for (int l = 0; l < config_.flow_lstm_layers; ++l)
        m.flow_states.push_back(init_state(tape, batch, config_.flow_hidden, fh, fw));
    for (int l = 0; l < config_.def_lstm_layers; ++l)
        m.def_states.push_back(init_state(tape, batch, config_.def_hidden, fh, fw));
    return m;
}

RolloutMemory FdNet::prime(Var x) const {
    RolloutMemory m = empty_memory(x.dim(0));
    m.m_prev = encode_position(x);
    m.s_prev = encode_shape(x);
    return m;
}

FlowStepOutput FdNet::flow_step(const RolloutMemory& memory, Var m_t) const {
    if (!memory.m_prev.valid()) throw std::logic_error("flow_step: memory has no previous position features");
    const auto& p = *params_;
    FlowStepOutput out;
    out.cost_volume = corr(memory.m_prev, m_t,
                           CorrOptions{config_.effective_corr_d(), config_.corr_stride, config_.corr_normalize});
    Var h = out.cost_volume;
    for (int l = 0; l < config_.flow_lstm_layers; ++l) {
        auto next = convlstm_step(lstm(lstm_name("flow", l), 1), h, memory.flow_states[static_cast<std::size_t>(l)]);
        out.states.push_back(next);
        h = next.h;
    }
    const Conv2dOptions same{{1, 1}, {1, 1}, {1, 1}};
    Var hidden = leaky_relu(conv2d(h, p["flow.head1.weight"], p["flow.head1.bias"], same), config_.leaky_slope);
    Var uv = conv2d(hidden, p["flow.head2.weight"], p["flow.head2.bias"], same);
    out.flow = FlowField{slice_channels(uv, 0, 1), slice_channels(uv, 1, 1)};
    return out;
}

DeformStepOutput FdNet::deform_step(const RolloutMemory& memory, Var s_t, const FlowField& flow) const {
    if (!memory.s_prev.valid()) throw std::logic_error("deform_step: memory has no previous shape features");
    const auto& p = *params_;
    DeformStepOutput out;
    out.delta = diff(s_t, warp(memory.s_prev, flow));
    Var h = out.delta;
    for (int l = 0; l < config_.def_lstm_layers; ++l) {
        auto next = convlstm_step(lstm(lstm_name("def", l), config_.def_dilations[static_cast<std::size_t>(l)]), h,
                                  memory.def_states[static_cast<std::size_t>(l)]);
        out.states.push_back(next);
        h = next.h;
    }
    out.d = conv2d(h, p["def.head.weight"], p["def.head.bias"]);
    out.w_pred = warp(s_t, flow);
    return out;
}

Var FdNet::combine_decode(Var d, Var w_pred) const {
    if (d.shape() != w_pred.shape() || d.value().rank() != 4 || d.dim(1) != config_.feature_channels)
        throw ShapeError("combine_decode: expected two [N," + std::to_string(config_.feature_channels) +
                         ",h,w] maps, got " + shape_str(d.shape()) + " and " + shape_str(w_pred.shape()));
    const auto& p = *params_;
    Var h = conv2d(concat_channels({d, w_pred}), p["comb.weight"], p["comb.bias"]);
    for (std::size_t i = 0; i < config_.decoder.size(); ++i) {
        const auto& l = config_.decoder[i];
        const auto name = dec_name(i);
        h = conv_transpose2d(h, p[name + ".weight"], p[name + ".bias"],
                             ConvTranspose2dOptions{{l.stride, l.stride}, {1, 1}, {l.output_padding, l.output_padding}});
        if (l.norm_act) {
            h = group_norm(h, default_groups(l.out_channels), p[name + ".gn.gamma"], p[name + ".gn.beta"],
                           config_.gn_eps);
            h = leaky_relu(h, config_.leaky_slope);
        }
    }
    return h;
}

StepOutput FdNet::step(const RolloutMemory& memory, Var x_t) const {
    if (!memory.warm()) throw std::logic_error("FDNet step requires primed memory (m_prev and s_prev)");
    const Var m_t = encode_position(x_t);
    const Var s_t = encode_shape(x_t);
    auto flow = flow_step(memory, m_t);
    auto deform = deform_step(memory, s_t, flow.flow);

    Var first = deform.d, second = deform.w_pred;
    if (!config_.ablation.use_flow_output) second = deform.d;
    if (!config_.ablation.use_def_output) first = deform.w_pred;

    StepOutput out;
    out.prediction = combine_decode(first, second);
    out.flow = flow.flow;
    out.d = deform.d;
    out.w_pred = deform.w_pred;
    out.memory.m_prev = m_t;
    out.memory.s_prev = s_t;
    out.memory.flow_states = std::move(flow.states);
    out.memory.def_states = std::move(deform.states);
    return out;
}

RolloutResult FdNet::rollout(std::span<const Var> inputs, const RolloutOptions& options) const {
    if (inputs.size() < 2) throw ShapeError("rollout needs at least 2 observed frames");
    if (options.horizon < 1) throw ShapeError("rollout horizon must be >= 1");
    const auto k = static_cast<std::size_t>(options.horizon);
    bool any_teacher = false;
    if (!options.teacher_mask.empty()) {
        if (options.teacher_mask.size() != k) throw ShapeError("teacher_mask length must equal the horizon");
        for (std::size_t i = 0; i + 1 < k; ++i) any_teacher = any_teacher || options.teacher_mask[i];
    }
    if (any_teacher && options.teacher.size() < k - 1)
        throw ShapeError("teacher frames must cover every masked position");

    auto finish = [&](Var pred) { return options.clamp_output ? clamp(pred, 0.0, 1.0) : pred; };

    RolloutResult result;
    RolloutMemory memory = prime(inputs[0]);
    for (std::size_t t = 1; t < inputs.size(); ++t) {
        auto out = step(memory, inputs[t]);
        memory = std::move(out.memory);
        (t + 1 < inputs.size() ? result.warmup : result.predictions).push_back(finish(out.prediction));
    }
    for (std::size_t i = 1; i < k; ++i) {
        const bool use_teacher = !options.teacher_mask.empty() && options.teacher_mask[i - 1];
        const Var feed = use_teacher ? options.teacher[i - 1] : result.predictions[i - 1];
        auto out = step(memory, feed);
        memory = std::move(out.memory);
        result.predictions.push_back(finish(out.prediction));
    }
    return result;
}

Tensor predict(const ModelConfig& config, const ModelParams& params, const Tensor& inputs, int horizon) {
    if (inputs.rank() != 5) throw ShapeError("predict expects inputs shaped [J,N,1,H,W], got " + shape_str(inputs.shape()));
    Tape tape;
    BoundParams bound(tape, params, false);
    FdNet net(config, bound);
    std::vector<Var> frames;
    for (std::int64_t j = 0; j < inputs.dim(0); ++j) frames.push_back(tape.constant(inputs.select(j)));
    RolloutOptions opt;
    opt.horizon = horizon;
    opt.clamp_output = true;
    const auto result = net.rollout(frames, opt);
    std::vector<Tensor> out;
    for (const auto& v : result.predictions) out.push_back(v.value());
    return Tensor::stack(out);
}

}  // namespace fdnet
