#include "fdnet/config.hpp"

#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "fdnet/errors.hpp"

namespace fdnet {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string type_name(const Json& j) {
    if (j.is_boolean()) return "a boolean";
    if (j.is_number_integer()) return "an integer";
    if (j.is_number()) return "a number";
    if (j.is_string()) return "a string";
    if (j.is_array()) return "an array";
    if (j.is_object()) return "an object";
    return "null";
}

/// Checks that `user` only uses keys present in `schema` with compatible
/// types. Array elements are checked by the specific readers.
void check_against(const Json& user, const Json& schema, const std::string& path) {
    if (schema.is_object()) {
        if (!user.is_object()) throw ConfigError(path + ": expected an object");
        for (auto it = user.begin(); it != user.end(); ++it) {
            const auto key = join(path, it.key());
            if (!schema.contains(it.key())) throw ConfigError(key + ": unknown key");
            check_against(it.value(), schema.at(it.key()), key);
        }
        return;
    }
    const bool ok = schema.is_array()            ? user.is_array()
                    : schema.is_boolean()        ? user.is_boolean()
                    : schema.is_number_integer() ? user.is_number_integer()
                    : schema.is_number()         ? user.is_number()
                    : schema.is_string()         ? user.is_string()
                                                 : true;
    if (!ok) throw ConfigError(path + ": expected " + type_name(schema) + ", got " + type_name(user));
}

/// Defaults patched with the user's keys, after validation against them.
Json merged(const Json& defaults, const Json& user, const std::string& section) {
    if (user.is_null()) return defaults;
    check_against(user, defaults, section);
    Json out = defaults;
    out.merge_patch(user);
    return out;
}

template <class T>
T field(const Json& j, const char* key, const std::string& section) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(join(section, key) + ": invalid value");
    }
}

Json range_json(const Range& r) { return Json::array({r.lo, r.hi}); }

Range range_field(const Json& j, const char* key, const std::string& section) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        throw ConfigError(join(section, key) + ": expected [lo, hi]");
    return {a[0].get<double>(), a[1].get<double>()};
}

std::string clip_mode_name(ClipMode m) { return m == ClipMode::kGlobalNorm ? "norm" : "value"; }

}  // namespace

// ---------------------------------------------------------------------------
// Model

Json to_json(const ModelConfig& c) {
    Json enc = Json::array(), dec = Json::array();
    for (const auto& l : c.encoder) enc.push_back({{"in", l.in_channels}, {"out", l.out_channels}, {"stride", l.stride}});
    for (const auto& l : c.decoder)
        dec.push_back({{"in", l.in_channels},
                       {"out", l.out_channels},
                       {"stride", l.stride},
                       {"output_padding", l.output_padding},
                       {"norm_act", l.norm_act}});
    return {{"height", c.height},
            {"width", c.width},
            {"encoder", enc},
            {"decoder", dec},
            {"flow_lstm_layers", c.flow_lstm_layers},
            {"flow_hidden", c.flow_hidden},
            {"flow_head_hidden", c.flow_head_hidden},
            {"def_lstm_layers", c.def_lstm_layers},
            {"def_hidden", c.def_hidden},
            {"def_dilations", c.def_dilations},
            {"corr_d", c.corr_d},
            {"corr_stride", c.corr_stride},
            {"corr_normalize", c.corr_normalize},
            {"feature_channels", c.feature_channels},
            {"peephole", c.peephole},
            {"leaky_slope", c.leaky_slope},
            {"gn_eps", c.gn_eps},
            {"ablation",
             {{"separate_encoders", c.ablation.separate_encoders},
              {"use_flow_output", c.ablation.use_flow_output},
              {"use_def_output", c.ablation.use_def_output}}}};
}

ModelConfig model_config_from_json(const Json& user) {
    const std::string s = "model";
    const Json j = merged(to_json(ModelConfig{}), user, s);
    ModelConfig c;
    c.height = field<int>(j, "height", s);
    c.width = field<int>(j, "width", s);
    c.encoder.clear();
    const Json enc_schema = {{"in", 1}, {"out", 1}, {"stride", 1}};
    for (std::size_t i = 0; i < j.at("encoder").size(); ++i) {
        const auto path = s + ".encoder[" + std::to_string(i) + "]";
        const auto& e = j.at("encoder")[i];
        check_against(e, enc_schema, path);
        for (const char* k : {"in", "out", "stride"})
            if (!e.contains(k)) throw ConfigError(path + "." + k + ": missing");
        c.encoder.push_back({field<int>(e, "in", path), field<int>(e, "out", path), field<int>(e, "stride", path)});
    }
    c.decoder.clear();
    const Json dec_schema = {{"in", 1}, {"out", 1}, {"stride", 1}, {"output_padding", 0}, {"norm_act", true}};
    for (std::size_t i = 0; i < j.at("decoder").size(); ++i) {
        const auto path = s + ".decoder[" + std::to_string(i) + "]";
        const auto& e = j.at("decoder")[i];
        check_against(e, dec_schema, path);
        for (const char* k : {"in", "out", "stride", "output_padding", "norm_act"})
            if (!e.contains(k)) throw ConfigError(path + "." + k + ": missing");
        c.decoder.push_back({field<int>(e, "in", path), field<int>(e, "out", path), field<int>(e, "stride", path),
                             field<int>(e, "output_padding", path), field<bool>(e, "norm_act", path)});
    }
    c.flow_lstm_layers = field<int>(j, "flow_lstm_layers", s);
    c.flow_hidden = field<int>(j, "flow_hidden", s);
    c.flow_head_hidden = field<int>(j, "flow_head_hidden", s);
    c.def_lstm_layers = field<int>(j, "def_lstm_layers", s);
    c.def_hidden = field<int>(j, "def_hidden", s);
    c.def_dilations = field<std::vector<int>>(j, "def_dilations", s);
    c.corr_d = field<int>(j, "corr_d", s);
    c.corr_stride = field<int>(j, "corr_stride", s);
    c.corr_normalize = field<bool>(j, "corr_normalize", s);
    c.feature_channels = field<int>(j, "feature_channels", s);
    c.peephole = field<bool>(j, "peephole", s);
    c.leaky_slope = field<double>(j, "leaky_slope", s);
    c.gn_eps = field<double>(j, "gn_eps", s);
    const auto& a = j.at("ablation");
    c.ablation.separate_encoders = field<bool>(a, "separate_encoders", s + ".ablation");
    c.ablation.use_flow_output = field<bool>(a, "use_flow_output", s + ".ablation");
    c.ablation.use_def_output = field<bool>(a, "use_def_output", s + ".ablation");
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Loss

Json to_json(const LossConfig& c) {
    return {{"lambda_pixel", c.lambda_pixel}, {"lambda_gdl", c.lambda_gdl}, {"gdl_exponent", c.gdl_exponent}};
}

LossConfig loss_config_from_json(const Json& user) {
    const std::string s = "train.loss";
    const Json j = merged(to_json(LossConfig{}), user, s);
    LossConfig c;
    c.lambda_pixel = field<double>(j, "lambda_pixel", s);
    c.lambda_gdl = field<double>(j, "lambda_gdl", s);
    c.gdl_exponent = field<int>(j, "gdl_exponent", s);
    c.validate();
    return c;
}

Json to_json(const WeightScheme& w) {
    return {{"kind", to_string(w.kind)},
            {"domain", to_string(w.domain)},
            {"thresholds", w.thresholds},
            {"weights", w.weights}};
}

WeightScheme weight_scheme_from_json(const Json& user) {
    const std::string s = "train.weights";
    Json schema = to_json(WeightScheme::normalized());
    if (user.is_null()) return WeightScheme::normalized();
    check_against(user, schema, s);
    const auto kind = scheme_kind_from_string(user.value("kind", std::string("normalized")));
    if (kind == SchemeKind::kCustom) {
        const Json j = merged(schema, user, s);
        return WeightScheme::custom(field<std::vector<double>>(j, "thresholds", s),
                                    field<std::vector<double>>(j, "weights", s),
                                    value_domain_from_string(field<std::string>(j, "domain", s)));
    }
    WeightScheme w = kind == SchemeKind::kHkoRainRate ? WeightScheme::hko_rainrate()
                     : kind == SchemeKind::kSradDbz   ? WeightScheme::srad_dbz()
                     : kind == SchemeKind::kUniform   ? WeightScheme::uniform()
                                                      : WeightScheme::normalized();
    // Built-in schemes are fixed; restating their own values is accepted.
    const Json fixed = to_json(w);
    for (const char* k : {"domain", "thresholds", "weights"})
        if (user.contains(k) && user.at(k) != fixed.at(k))
            throw ConfigError(s + "." + k + ": only adjustable with kind \"custom\"");
    return w;
}

Json to_json(const SamplingSchedule& c) {
    return {{"start_p", c.start_p}, {"end_p", c.end_p}, {"decay_steps", c.decay_steps}};
}

SamplingSchedule sampling_from_json(const Json& user) {
    const std::string s = "train.sampling";
    const Json j = merged(to_json(TrainConfig{}.sampling), user, s);
    SamplingSchedule c;
    c.start_p = field<double>(j, "start_p", s);
    c.end_p = field<double>(j, "end_p", s);
    c.decay_steps = field<std::int64_t>(j, "decay_steps", s);
    if (c.decay_steps < 0) throw ConfigError(s + ".decay_steps: must be >= 0 (0 means half of max_iterations)");
    SamplingSchedule probe = c;
    if (probe.decay_steps == 0) probe.decay_steps = 1;
    probe.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Synthetic data

Json to_json(const SynthConfig& c) {
    return {{"seed", c.seed},
            {"num_sequences", c.num_sequences},
            {"length", c.length},
            {"height", c.height},
            {"width", c.width},
            {"min_blobs", c.min_blobs},
            {"max_blobs", c.max_blobs},
            {"speed", range_json(c.speed)},
            {"amplitude", range_json(c.amplitude)},
            {"radius", range_json(c.radius)},
            {"aspect", range_json(c.aspect)},
            {"growth", range_json(c.growth)},
            {"rotation", range_json(c.rotation)},
            {"decay", range_json(c.decay)},
            {"max_birth", c.max_birth},
            {"margin", c.margin},
            {"id_prefix", c.id_prefix}};
}

SynthConfig synth_config_from_json(const Json& user) {
    const std::string s = "synth";
    const Json j = merged(to_json(SynthConfig{}), user, s);
    SynthConfig c;
    c.seed = field<std::uint64_t>(j, "seed", s);
    c.num_sequences = field<int>(j, "num_sequences", s);
    c.length = field<int>(j, "length", s);
    c.height = field<int>(j, "height", s);
    c.width = field<int>(j, "width", s);
    c.min_blobs = field<int>(j, "min_blobs", s);
    c.max_blobs = field<int>(j, "max_blobs", s);
    c.speed = range_field(j, "speed", s);
    c.amplitude = range_field(j, "amplitude", s);
    c.radius = range_field(j, "radius", s);
    c.aspect = range_field(j, "aspect", s);
    c.growth = range_field(j, "growth", s);
    c.rotation = range_field(j, "rotation", s);
    c.decay = range_field(j, "decay", s);
    c.max_birth = field<int>(j, "max_birth", s);
    c.margin = field<double>(j, "margin", s);
    c.id_prefix = field<std::string>(j, "id_prefix", s);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Training

Json to_json(const TrainConfig& c) {
    return {{"max_iterations", c.max_iterations},
            {"batch_size", c.batch_size},
            {"input_frames", c.input_frames},
            {"horizon", c.horizon},
            {"window_stride", c.window_stride},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"clip_value", c.clip_value},
            {"clip_mode", clip_mode_name(c.clip_mode)},
            {"loss", to_json(c.loss)},
            {"weights", to_json(c.weights)},
            {"sampling", to_json(c.sampling)},
            {"warmup_loss", c.warmup_loss},
            {"eval_every", c.eval_every},
            {"eval_max_windows", c.eval_max_windows},
            {"checkpoint_every", c.checkpoint_every},
            {"checkpoint_dir", c.checkpoint_dir},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& user) {
    const std::string s = "train";
    Json schema = to_json(TrainConfig{});
    if (!user.is_null()) check_against(user, schema, s);
    // The weight scheme is merged by its own reader (built-ins are fixed).
    Json scalar_user = user.is_null() ? Json::object() : user;
    scalar_user.erase("weights");
    const Json j = merged(schema, scalar_user, s);
    TrainConfig c;
    c.max_iterations = field<std::int64_t>(j, "max_iterations", s);
    c.batch_size = field<int>(j, "batch_size", s);
    c.input_frames = field<int>(j, "input_frames", s);
    c.horizon = field<int>(j, "horizon", s);
    c.window_stride = field<int>(j, "window_stride", s);
    c.adam.lr = field<double>(j, "lr", s);
    c.adam.beta1 = field<double>(j, "beta1", s);
    c.adam.beta2 = field<double>(j, "beta2", s);
    c.adam.eps = field<double>(j, "eps", s);
    c.clip_value = field<double>(j, "clip_value", s);
    const auto mode = field<std::string>(j, "clip_mode", s);
    if (mode == "norm") c.clip_mode = ClipMode::kGlobalNorm;
    else if (mode == "value") c.clip_mode = ClipMode::kValue;
    else throw ConfigError("train.clip_mode: expected \"norm\" or \"value\"");
    c.loss = loss_config_from_json(j.at("loss"));
    c.weights = weight_scheme_from_json(user.is_object() && user.contains("weights") ? user.at("weights") : Json());
    c.sampling = sampling_from_json(j.at("sampling"));
    c.warmup_loss = field<bool>(j, "warmup_loss", s);
    c.eval_every = field<std::int64_t>(j, "eval_every", s);
    c.eval_max_windows = field<std::int64_t>(j, "eval_max_windows", s);
    c.checkpoint_every = field<std::int64_t>(j, "checkpoint_every", s);
    c.checkpoint_dir = field<std::string>(j, "checkpoint_dir", s);
    c.seed = field<std::uint64_t>(j, "seed", s);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Digests and the run configuration

std::string digest(const Json& j) {
    const std::string text = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

Json to_json(const DataPaths& d) {
    return {{"root", d.root},
            {"train_split", d.train_split},
            {"val_split", d.val_split},
            {"test_split", d.test_split},
            {"val_sequences", d.val_sequences},
            {"test_sequences", d.test_sequences},
            {"filter_noisy", d.filter_noisy},
            {"format", d.format}};
}

namespace {

DataPaths data_paths_from_json(const Json& user, const DataPaths& defaults) {
    const std::string s = "data";
    const Json j = merged(to_json(defaults), user, s);
    DataPaths d;
    d.root = field<std::string>(j, "root", s);
    d.train_split = field<std::string>(j, "train_split", s);
    d.val_split = field<std::string>(j, "val_split", s);
    d.test_split = field<std::string>(j, "test_split", s);
    d.val_sequences = field<int>(j, "val_sequences", s);
    d.test_sequences = field<int>(j, "test_sequences", s);
    d.filter_noisy = field<bool>(j, "filter_noisy", s);
    d.format = field<std::string>(j, "format", s);
    return d;
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig r;
    r.model.height = 32;
    r.model.width = 32;
    r.model.flow_hidden = 32;
    r.model.flow_head_hidden = 32;
    r.model.def_hidden = 32;
    r.data.root = "data";
    return r;
}

Json RunConfig::to_json() const {
    return {{"model", fdnet::to_json(model)},
            {"train", fdnet::to_json(train)},
            {"synth", fdnet::to_json(synth)},
            {"data", fdnet::to_json(data)}};
}

RunConfig RunConfig::from_json(const Json& j) {
    const RunConfig def = defaults();
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "model" && it.key() != "train" && it.key() != "synth" && it.key() != "data")
            throw ConfigError(it.key() + ": unknown key");
    auto section = [&](const char* k) { return j.contains(k) ? j.at(k) : Json::object(); };
    // Sections merge over the desk-scale defaults, not the bare struct defaults.
    auto over = [](const Json& base, const Json& user, const char* name) {
        check_against(user, base, name);
        Json out = base;
        out.merge_patch(user);
        return out;
    };
    RunConfig r;
    r.model = model_config_from_json(over(fdnet::to_json(def.model), section("model"), "model"));
    Json train_user = section("train");
    Json train_base = fdnet::to_json(def.train);
    train_base.erase("weights");
    Json weights_user = train_user.contains("weights") ? train_user.at("weights") : Json();
    train_user.erase("weights");
    Json train_json = over(train_base, train_user, "train");
    if (!weights_user.is_null()) train_json["weights"] = weights_user;
    r.train = train_config_from_json(train_json);
    r.synth = synth_config_from_json(over(fdnet::to_json(def.synth), section("synth"), "synth"));
    r.data = data_paths_from_json(section("data"), def.data);
    r.validate();
    return r;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    synth.validate();
    if (data.root.empty()) throw ConfigError("data.root: must not be empty");
    if (data.val_sequences < 0) throw ConfigError("data.val_sequences: must be >= 0");
    if (data.test_sequences < 0) throw ConfigError("data.test_sequences: must be >= 0");
    if (data.format != "pgm" && data.format != "grd") throw ConfigError("data.format: expected \"pgm\" or \"grd\"");
    for (const auto* split : {&data.train_split, &data.val_split, &data.test_split})
        if (split->empty() || split->find('/') != std::string::npos)
            throw ConfigError("data: split names must be non-empty path components");
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void apply_override(Json& j, const Json& schema, const std::string& key, const std::string& value) {
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string p; std::getline(ss, p, '.');) {
        if (p.empty()) throw ConfigError(key + ": malformed key");
        parts.push_back(p);
    }
    if (parts.empty()) throw ConfigError("empty override key");
    const Json* sch = &schema;
    Json* node = &j;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!sch->is_object() || !sch->contains(parts[i])) throw ConfigError(key + ": unknown key");
        sch = &sch->at(parts[i]);
        if (!node->is_object()) *node = Json::object();
        node = &(*node)[parts[i]];
    }
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;
    }
    // A string-typed key keeps the literal text (e.g. a numeric-looking path).
    if (sch->is_string() && !parsed.is_string()) parsed = value;
    if (sch->is_number_float() && parsed.is_number()) parsed = parsed.get<double>();
    check_against(parsed, *sch, key);
    *node = parsed;
}

}  // namespace fdnet
