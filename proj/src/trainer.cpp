#include "fdnet/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fdnet/config.hpp"
#include "fdnet/errors.hpp"
#include "fdnet/ops.hpp"

namespace fdnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Optimizer

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr: must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1: must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2: must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("train.eps: must be positive");
}

AdamState AdamState::init(const ParamSet& params, const AdamConfig& hyper) {
    hyper.validate();
    return {hyper, params.zeros_like(), params.zeros_like(), 0};
}

namespace {

void require_aligned(const ParamSet& a, const ParamSet& b, const char* what) {
    if (a.names() != b.names()) throw ShapeError(std::string(what) + ": parameter names differ");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.at(i).shape() != b.at(i).shape())
            throw ShapeError(std::string(what) + ": shape mismatch for " + a.names()[i]);
}

}  // namespace

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads) {
    require_aligned(params, grads, "adam_step");
    require_aligned(params, state.m, "adam_step");
    const auto& h = state.hyper;
    const std::int64_t t = state.step + 1;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    // Update into copies so a non-finite result leaves everything untouched.
    ParamSet new_params = params, new_m = state.m, new_v = state.v;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = new_params.at(i).data();
        auto m = new_m.at(i).data();
        auto v = new_v.at(i).data();
        const auto g = grads.at(i).data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
            v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1, vhat = v[k] / c2;
            p[k] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
        }
        require_finite(new_params.at(i), ("adam_step update of " + params.names()[i]).c_str());
    }
    params = std::move(new_params);
    state.m = std::move(new_m);
    state.v = std::move(new_v);
    state.step = t;
}

double global_norm(const ParamSet& grads) {
    double sq = 0.0;
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (double g : grads.at(i).data()) sq += g * g;
    return std::sqrt(sq);
}

namespace {

void require_finite_grads(const ParamSet& grads) {
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!grads.at(i).all_finite()) throw NumericError("non-finite gradient for " + grads.names()[i]);
}

}  // namespace

double clip_gradients(ParamSet& grads, double clip_value) {
    if (!(clip_value > 0.0)) throw ConfigError("train.clip_value: must be positive");
    require_finite_grads(grads);
    const double norm = global_norm(grads);
    if (norm > clip_value) {
        const double s = clip_value / norm;
        for (std::size_t i = 0; i < grads.size(); ++i)
            for (double& g : grads.at(i).data()) g *= s;
    }
    return norm;
}

double clip_gradient_values(ParamSet& grads, double clip_value) {
    if (!(clip_value > 0.0)) throw ConfigError("train.clip_value: must be positive");
    require_finite_grads(grads);
    const double norm = global_norm(grads);
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (double& g : grads.at(i).data()) g = std::clamp(g, -clip_value, clip_value);
    return norm;
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
    if (max_iterations < 1) throw ConfigError("train.max_iterations: must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (input_frames < 2) throw ConfigError("train.input_frames: must be >= 2");
    if (horizon < 1) throw ConfigError("train.horizon: must be >= 1");
    if (window_stride < 1) throw ConfigError("train.window_stride: must be >= 1");
    adam.validate();
    if (!(clip_value > 0.0)) throw ConfigError("train.clip_value: must be positive");
    loss.validate();
    weights.validate();
    effective_sampling().validate();
    if (eval_every < 0) throw ConfigError("train.eval_every: must be >= 0");
    if (eval_max_windows < 1) throw ConfigError("train.eval_max_windows: must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every: must be >= 0");
}

SamplingSchedule TrainConfig::effective_sampling() const {
    SamplingSchedule s = sampling;
    if (s.decay_steps == 0) s.decay_steps = std::max<std::int64_t>(1, max_iterations / 2);
    return s;
}

void write_log_csv(std::ostream& os, const std::vector<LogRow>& rows) {
    os << "iteration,split,loss_pixel,loss_gdl,loss_total,p_teacher\n" << std::setprecision(17);
    for (const auto& r : rows)
        os << r.iteration << ',' << r.split << ',' << r.loss_pixel << ',' << r.loss_gdl << ',' << r.loss_total
           << ',' << r.p_teacher << '\n';
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'F', 'D', 'C', 'K'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeF64 = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    template <class T>
    void le(T v) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
        const U u = std::bit_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
    }
    void str(const std::string& s) {
        le(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        le(kDtypeF64);
        le(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) le(static_cast<std::uint64_t>(d));
        for (double v : t.data()) le(v);
    }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& buf, std::size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}

    void need(std::size_t n) const {
        if (pos_ + n > end_) throw IoError(path_ + ": checkpoint is truncated or corrupt");
    }
    template <class T>
    T le() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
        need(sizeof(T));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i));
        pos_ += sizeof(T);
        return std::bit_cast<T>(u);
    }
    std::string str() {
        const auto n = le<std::uint32_t>();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::pair<std::string, Tensor> tensor() {
        std::string name = str();
        const auto dtype = le<std::uint8_t>();
        if (dtype != kDtypeF32 && dtype != kDtypeF64) throw IoError(path_ + ": unknown dtype in record " + name);
        const auto rank = le<std::uint32_t>();
        if (rank > 8) throw IoError(path_ + ": implausible rank in record " + name);
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(static_cast<std::int64_t>(le<std::uint64_t>()));
            numel *= static_cast<std::uint64_t>(shape.back());
        }
        need(numel * (dtype == kDtypeF64 ? 8 : 4));
        std::vector<double> data(numel);
        for (auto& v : data) v = dtype == kDtypeF64 ? le<double>() : static_cast<double>(le<float>());
        return {std::move(name), Tensor(std::move(shape), std::move(data))};
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    bool done() const { return pos_ == end_; }

private:
    const std::string& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string path_;
};

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic, 4);
    w.le(Checkpoint::kVersion);
    const std::vector<std::string> strings{to_json(ckpt.model).dump(), ckpt.model_digest, ckpt.train_digest,
                                           ckpt.loss_digest};
    w.le(static_cast<std::uint32_t>(strings.size()));
    for (const auto& s : strings) w.str(s);
    w.le(static_cast<std::int64_t>(ckpt.iteration));
    w.le(ckpt.best_val_bmse);
    w.le(static_cast<std::int64_t>(ckpt.adam.step));
    w.le(ckpt.adam.hyper.lr);
    w.le(ckpt.adam.hyper.beta1);
    w.le(ckpt.adam.hyper.beta2);
    w.le(ckpt.adam.hyper.eps);
    const auto n = ckpt.params.size();
    w.le(static_cast<std::uint32_t>(3 * n));
    for (std::size_t i = 0; i < n; ++i) w.tensor("param/" + ckpt.params.names()[i], ckpt.params.at(i));
    for (std::size_t i = 0; i < n; ++i) w.tensor("adam.m/" + ckpt.adam.m.names()[i], ckpt.adam.m.at(i));
    for (std::size_t i = 0; i < n; ++i) w.tensor("adam.v/" + ckpt.adam.v.names()[i], ckpt.adam.v.at(i));
    const auto sum = fnv1a(w.buffer().data(), w.buffer().size());
    w.le(sum);

    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    // Write to a sibling file first so a crash never leaves a half-written checkpoint.
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const std::string where = path.string();
    if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0) throw IoError(where + ": not an FDCK checkpoint");
    const std::size_t body = buf.size() - 8;
    {
        std::uint64_t stored = 0;
        for (int i = 0; i < 8; ++i)
            stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[body + i])) << (8 * i);
        if (stored != fnv1a(buf.data(), body)) throw IoError(where + ": checkpoint is truncated or corrupt");
    }
    Reader r(buf, body, where);
    r.skip(4);  // magic, checked above
    const auto version = r.le<std::uint32_t>();
    if (version != Checkpoint::kVersion)
        throw IoError(where + ": checkpoint version " + std::to_string(version) + " is not supported");
    const auto nstr = r.le<std::uint32_t>();
    if (nstr < 4) throw IoError(where + ": missing config strings");
    std::vector<std::string> strings;
    for (std::uint32_t i = 0; i < nstr; ++i) strings.push_back(r.str());

    Checkpoint ck;
    try {
        ck.model = model_config_from_json(Json::parse(strings[0]));
    } catch (const std::exception& e) {
        throw IoError(where + ": stored model config is invalid: " + e.what());
    }
    ck.model_digest = strings[1];
    ck.train_digest = strings[2];
    ck.loss_digest = strings[3];
    ck.iteration = r.le<std::int64_t>();
    ck.best_val_bmse = r.le<double>();
    ck.adam.step = r.le<std::int64_t>();
    ck.adam.hyper.lr = r.le<double>();
    ck.adam.hyper.beta1 = r.le<double>();
    ck.adam.hyper.beta2 = r.le<double>();
    ck.adam.hyper.eps = r.le<double>();
    const auto nrec = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < nrec; ++i) {
        auto [name, t] = r.tensor();
        const auto slash = name.find('/');
        const std::string kind = name.substr(0, slash), pname = name.substr(slash + 1);
        if (kind == "param") ck.params.add(pname, std::move(t));
        else if (kind == "adam.m") ck.adam.m.add(pname, std::move(t));
        else if (kind == "adam.v") ck.adam.v.add(pname, std::move(t));
        else throw IoError(where + ": unknown record " + name);
    }
    if (!r.done()) throw IoError(where + ": trailing bytes after records");
    if (ck.params.names() != ck.adam.m.names() || ck.params.names() != ck.adam.v.names())
        throw IoError(where + ": optimizer moments do not match parameters");
    return ck;
}

void require_compatible(const Checkpoint& ckpt, const ModelConfig& model, bool force) {
    if (force) return;
    const auto expected = digest(to_json(model));
    if (ckpt.model_digest != expected)
        throw ConfigError("checkpoint model config digest " + ckpt.model_digest + " does not match " + expected +
                          " (use --force to override)");
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<std::size_t> batch_picks(std::int64_t iteration, int batch_size, std::size_t num_windows,
                                     std::uint64_t seed) {
    if (num_windows == 0) throw ShapeError("batch_picks: no windows");
    std::vector<std::size_t> picks;
    std::int64_t cached_epoch = -1;
    std::vector<std::size_t> perm(num_windows);
    const auto n = static_cast<std::int64_t>(num_windows);
    for (int b = 0; b < batch_size; ++b) {
        const std::int64_t pos = (iteration - 1) * batch_size + b;
        const std::int64_t epoch = pos / n;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            const auto e = static_cast<std::uint64_t>(epoch);
            std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                             static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32), 0xe90cu};
            std::mt19937_64 rng(sq);
            for (std::size_t i = num_windows - 1; i > 0; --i) {
                const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
                std::swap(perm[i], perm[std::min(j, i)]);
            }
            cached_epoch = epoch;
        }
        picks.push_back(perm[static_cast<std::size_t>(pos % n)]);
    }
    return picks;
}

LossTerms rollout_loss(const FdNet& net, const Batch& batch, const std::vector<bool>& teacher_mask,
                       const TrainConfig& cfg) {
    Tape& tape = net.params().tape();
    const auto J = batch.inputs.dim(0), K = batch.targets.dim(0);
    const double B = static_cast<double>(batch.inputs.dim(1));
    std::vector<Var> inputs, teacher;
    std::vector<Tensor> input_frames, target_frames;
    for (std::int64_t j = 0; j < J; ++j) {
        input_frames.push_back(batch.inputs.select(j));
        inputs.push_back(tape.constant(input_frames.back()));
    }
    for (std::int64_t k = 0; k < K; ++k) target_frames.push_back(batch.targets.select(k));
    const bool any_teacher = std::any_of(teacher_mask.begin(), teacher_mask.end(), [](bool b) { return b; });
    if (any_teacher)
        for (const auto& t : target_frames) teacher.push_back(tape.constant(t));

    RolloutOptions opt;
    opt.horizon = static_cast<int>(K);
    opt.teacher = teacher;
    opt.teacher_mask = teacher_mask;
    const auto result = net.rollout(inputs, opt);

    LossTerms sum;
    auto accumulate = [&](Var pred, const Tensor& target) {
        const auto w = weight_map_normalized(target, cfg.weights);
        auto t = total_loss(pred, target, w, cfg.loss, B);
        if (!sum.total.valid()) {
            sum = t;
            return;
        }
        sum.pixel = add(sum.pixel, t.pixel);
        sum.gdl = add(sum.gdl, t.gdl);
        sum.total = add(sum.total, t.total);
    };
    if (cfg.warmup_loss)
        for (std::size_t i = 0; i < result.warmup.size(); ++i) accumulate(result.warmup[i], input_frames[i + 2]);
    for (std::size_t k = 0; k < result.predictions.size(); ++k) accumulate(result.predictions[k], target_frames[k]);
    return sum;
}

namespace {

std::string describe_batch(const std::vector<Sequence>& seqs, const std::vector<WindowRef>& refs,
                           const std::vector<std::size_t>& picks) {
    std::ostringstream s;
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const auto& r = refs[picks[i]];
        s << (i ? ", " : "") << seqs[r.sequence].id << "@" << r.start;
    }
    return s.str();
}

LogRow validate_once(const TrainConfig& cfg, const ModelConfig& model, const ParamSet& params,
                     const std::vector<Sequence>& val, std::int64_t iteration) {
    const int J = cfg.input_frames, K = cfg.horizon;
    auto refs = window_index(val, J, K, cfg.window_stride);
    if (refs.empty()) throw ShapeError("validation split has no windows of length " + std::to_string(J + K));
    const auto limit = std::min<std::size_t>(refs.size(), static_cast<std::size_t>(cfg.eval_max_windows));
    LogRow row;
    row.iteration = iteration;
    row.split = "val";
    const std::vector<bool> no_teacher(static_cast<std::size_t>(K), false);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < limit; start += static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<std::size_t> picks;
        for (std::size_t i = start; i < std::min(limit, start + cfg.batch_size); ++i) picks.push_back(i);
        const auto batch = make_batch(val, refs, picks, J, K);
        Tape tape;
        BoundParams bound(tape, params, false);
        FdNet net(model, bound);
        const auto terms = rollout_loss(net, batch, no_teacher, cfg);
        row.loss_pixel += terms.pixel.value().item();
        row.loss_gdl += terms.gdl.value().item();
        row.loss_total += terms.total.value().item();
        ++batches;
    }
    row.loss_pixel /= static_cast<double>(batches);
    row.loss_gdl /= static_cast<double>(batches);
    row.loss_total /= static_cast<double>(batches);
    const auto report = evaluate_windows(model, params, val, J, K, cfg.weights.thresholds, cfg.weights,
                                         cfg.eval_max_windows);
    row.bmse = report.avg_bmse();
    return row;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ModelConfig& model, const Dataset& data,
                  const std::optional<Checkpoint>& resume, const TrainCallback& callback) {
    cfg.validate();
    model.validate();
    const int J = cfg.input_frames, K = cfg.horizon;
    const auto refs = window_index(data.train, J, K, cfg.window_stride);
    if (refs.empty())
        throw ShapeError("training set has no windows of length " + std::to_string(J + K) + " after filtering");
    for (const auto& s : data.train)
        if (s.height() != model.height || s.width() != model.width)
            throw ShapeError("sequence " + s.id + " is " + std::to_string(s.height()) + "x" +
                             std::to_string(s.width()) + ", model expects " + std::to_string(model.height) + "x" +
                             std::to_string(model.width));

    const auto model_json = to_json(model);
    Checkpoint state;
    state.model = model;
    state.model_digest = digest(model_json);
    state.train_digest = digest(to_json(cfg));
    state.loss_digest = digest(Json{{"loss", to_json(cfg.loss)}, {"weights", to_json(cfg.weights)}});
    if (resume) {
        require_compatible(*resume, model);
        state.params = resume->params;
        state.adam = resume->adam;
        state.adam.hyper = cfg.adam;
        state.iteration = resume->iteration;
        state.best_val_bmse = resume->best_val_bmse;
    } else {
        state.params = init_params(model, cfg.seed);
        state.adam = AdamState::init(state.params, cfg.adam);
    }

    const auto schedule = cfg.effective_sampling();
    const fs::path dir = cfg.checkpoint_dir;
    TrainResult result;
    auto emit = [&](const LogRow& row) {
        result.log.push_back(row);
        return !callback || callback(row);
    };

    bool keep_going = true;
    for (std::int64_t it = state.iteration + 1; it <= cfg.max_iterations && keep_going; ++it) {
        const auto picks = batch_picks(it, cfg.batch_size, refs.size(), cfg.seed);
        const auto batch = make_batch(data.train, refs, picks, J, K);
        const auto mask = sampling_mask(it, schedule, K, cfg.seed);

        Tape tape;
        BoundParams bound(tape, state.params, true);
        FdNet net(model, bound);
        LossTerms terms;
        ParamSet grads;
        try {
            terms = rollout_loss(net, batch, mask, cfg);
            grads = bound.gradients(tape.backward(terms.total));
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(it) + ", batch [" + describe_batch(data.train, refs, picks) +
                               "]: " + e.what());
        }
        const double norm = cfg.clip_mode == ClipMode::kGlobalNorm ? clip_gradients(grads, cfg.clip_value)
                                                                   : clip_gradient_values(grads, cfg.clip_value);
        if (cfg.clip_mode == ClipMode::kGlobalNorm && global_norm(grads) > cfg.clip_value * (1.0 + 1e-12))
            throw NumericError("gradient norm exceeds the clip value after clipping");
        adam_step(state.adam, state.params, grads);
        state.iteration = it;

        LogRow row;
        row.iteration = it;
        row.split = "train";
        row.loss_pixel = terms.pixel.value().item();
        row.loss_gdl = terms.gdl.value().item();
        row.loss_total = terms.total.value().item();
        row.p_teacher = teacher_probability(it, schedule);
        row.grad_norm = norm;
        keep_going = emit(row);

        if (cfg.eval_every > 0 && it % cfg.eval_every == 0 && !data.val.empty()) {
            const auto vrow = validate_once(cfg, model, state.params, data.val, it);
            if (state.best_val_bmse < 0.0 || vrow.bmse < state.best_val_bmse) {
                state.best_val_bmse = vrow.bmse;
                result.best = state;
                if (!dir.empty()) save_checkpoint(dir / "best.fdck", state);
            }
            keep_going = emit(vrow) && keep_going;
        }
        if (!dir.empty() && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "iter_%06lld.fdck", static_cast<long long>(it));
            save_checkpoint(dir / name, state);
        }
    }
    if (!dir.empty()) save_checkpoint(dir / "last.fdck", state);
    result.last = std::move(state);
    return result;
}

SkillReport evaluate_windows(const ModelConfig& model, const ParamSet& params, const std::vector<Sequence>& seqs,
                             int J, int K, const std::vector<double>& thresholds, const WeightScheme& scheme,
                             std::int64_t max_windows) {
    auto refs = window_index(seqs, J, K, 1);
    if (refs.empty()) throw ShapeError("evaluation split has no windows of length " + std::to_string(J + K));
    if (max_windows > 0 && refs.size() > static_cast<std::size_t>(max_windows))
        refs.resize(static_cast<std::size_t>(max_windows));
    SkillReport report(K, thresholds);
    constexpr std::size_t kChunk = 8;
    for (std::size_t start = 0; start < refs.size(); start += kChunk) {
        std::vector<std::size_t> picks;
        for (std::size_t i = start; i < std::min(refs.size(), start + kChunk); ++i) picks.push_back(i);
        const auto batch = make_batch(seqs, refs, picks, J, K);
        const auto preds = predict(model, params, batch.inputs, K);
        report.merge(evaluate_rollout(preds, batch.targets, thresholds, scheme));
    }
    return report;
}

}  // namespace fdnet
