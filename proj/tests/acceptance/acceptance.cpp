// Acceptance suite: one PASS/FAIL line per criterion.
//
//   fdnet_acceptance            run all nine
//   fdnet_acceptance 2 5        run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fdnet/config.hpp"
#include "fdnet/convlstm.hpp"
#include "fdnet/data.hpp"
#include "fdnet/flowdef.hpp"
#include "fdnet/grad_check.hpp"
#include "fdnet/loss.hpp"
#include "fdnet/metrics.hpp"
#include "fdnet/model.hpp"
#include "fdnet/ops.hpp"
#include "fdnet/trainer.hpp"
#include "fdnet/units.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "tiny_model.hpp"

using namespace fdnet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Collects named sub-checks; the criterion passes when all of them do.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok) failures_.push_back(what);
    }
    void note(const std::string& s) { notes_.push_back(s); }
    bool ok() const { return failures_.empty(); }
    std::string summary() const {
        std::ostringstream os;
        os << (total_ - failures_.size()) << "/" << total_ << " checks";
        for (const auto& n : notes_) os << "; " << n;
        for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) os << "; failed: " << failures_[i];
        if (failures_.size() > 5) os << "; ... " << failures_.size() - 5 << " more";
        return os.str();
    }

private:
    std::size_t total_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

Tensor rnd(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) { return oracle::random_tensor(std::move(s), rng, lo, hi); }

// ---------------------------------------------------------------------------
// 1. Gradient suite

constexpr double kGradTol = 1e-4;

/// Central differences cannot resolve gradients much below eps_mach |f| / h,
/// so the relative-error floor is set where that rounding alone would give an
/// error of kGradTol.
double resolution(const MultiScalarFn& f, std::span<const Tensor> pts, double h) {
    Tape t;
    std::vector<Var> v;
    for (const auto& p : pts) v.push_back(t.constant(p));
    return 16.0 * std::numeric_limits<double>::epsilon() * std::abs(f(t, v).value().item()) / h;
}

void grad_case(Checks& c, const std::string& name, const MultiScalarFn& f, std::vector<Tensor> pts,
               GradCheckOptions opt = {}) {
    opt.abs_floor = std::max(opt.abs_floor, resolution(f, pts, opt.eps) / kGradTol);
    const auto r = grad_check(f, pts, opt);
    c.expect(r.max_rel_error <= kGradTol && r.checked > 0,
             name + " rel " + fmt(r.max_rel_error) + " over " + std::to_string(r.checked));
    if (r.excluded > 0) c.note(name + ": " + std::to_string(r.excluded) + " kink coords excluded");
}

/// Loss of a free-running J=2, K=2 rollout, the same loss the trainer minimizes.
Var e2e_loss(Tape& tape, const ModelConfig& cfg, const std::vector<std::string>& names, std::span<const Var> vars,
             const Batch& batch) {
    BoundParams bound(tape, names, vars);
    FdNet net(cfg, bound);
    TrainConfig tc;
    tc.input_frames = 2;
    tc.horizon = 2;
    return rollout_loss(net, batch, {false, false}, tc).total;
}

std::string criterion_gradients() {
    const auto t0 = Clock::now();
    Checks c;
    std::mt19937_64 rng(101);
    GradCheckOptions kinked;
    kinked.kink_tolerance = 1e-6;

    // Weighted sums keep every output element in play.
    auto weighted = [](Tape& tape, Var y, const Tensor& w) { return sum(y * tape.constant(w)); };

    for (int variant = 0; variant < 3; ++variant) {
        const int stride = 1 + variant % 2, pad = variant == 0 ? 0 : 1, dil = variant == 2 ? 2 : 1;
        const Conv2dOptions o{.stride = {stride, stride}, .padding = {pad, pad}, .dilation = {dil, dil}};
        const Tensor x = rnd({2, 2, 6, 5}, rng), w = rnd({3, 2, 3, 3}, rng), b = rnd({3}, rng);
        Tape probe;
        const Tensor wy = rnd(conv2d(probe.constant(x), probe.constant(w), probe.constant(b), o).shape(), rng);
        grad_case(c, "conv2d#" + std::to_string(variant),
                  [&](Tape& t, std::span<const Var> v) { return weighted(t, conv2d(v[0], v[1], v[2], o), wy); },
                  {x, w, b});
    }
    for (int variant = 0; variant < 2; ++variant) {
        const ConvTranspose2dOptions o{.stride = {1 + variant, 1 + variant}, .padding = {1, 1},
                                       .output_padding = {variant, variant}};
        const Tensor x = rnd({2, 3, 3, 4}, rng), w = rnd({3, 2, 3, 3}, rng), b = rnd({2}, rng);
        Tape probe;
        const Tensor wy = rnd(conv_transpose2d(probe.constant(x), probe.constant(w), probe.constant(b), o).shape(), rng);
        grad_case(c, "conv_transpose2d#" + std::to_string(variant),
                  [&](Tape& t, std::span<const Var> v) { return weighted(t, conv_transpose2d(v[0], v[1], v[2], o), wy); },
                  {x, w, b});
    }
    {
        const Tensor x = rnd({2, 4, 3, 3}, rng, -2, 2), g = rnd({4}, rng, 0.5, 1.5), b = rnd({4}, rng);
        const Tensor wy = rnd({2, 4, 3, 3}, rng);
        grad_case(c, "group_norm",
                  [&](Tape& t, std::span<const Var> v) { return weighted(t, group_norm(v[0], 2, v[1], v[2]), wy); },
                  {x, g, b});
    }
    {
        const Tensor x = rnd({3, 4}, rng, -3, 3), wy = rnd({3, 4}, rng);
        grad_case(c, "sigmoid", [&](Tape& t, std::span<const Var> v) { return weighted(t, sigmoid(v[0]), wy); }, {x});
        grad_case(c, "tanh", [&](Tape& t, std::span<const Var> v) { return weighted(t, fdnet::tanh(v[0]), wy); }, {x});
        grad_case(c, "leaky_relu", [&](Tape& t, std::span<const Var> v) { return weighted(t, leaky_relu(v[0], 0.01), wy); },
                  {x}, kinked);
    }
    {
        auto p = make_convlstm_params(2, 3, 4, 4, 2, true);
        std::vector<Tensor> pts;
        for (Tensor* t : {&p.w_x, &p.w_h, &p.bias, &p.w_ci, &p.w_cf, &p.w_co}) pts.push_back(rnd(t->shape(), rng, -0.4, 0.4));
        pts.push_back(rnd({1, 2, 4, 4}, rng));
        pts.push_back(rnd({1, 3, 4, 4}, rng));
        pts.push_back(rnd({1, 3, 4, 4}, rng));
        const Tensor wh = rnd({1, 3, 4, 4}, rng), wc = rnd({1, 3, 4, 4}, rng);
        grad_case(c, "convlstm_step",
                  [&](Tape& t, std::span<const Var> v) {
                      const ConvLstmVars vars{v[0], v[1], v[2], v[3], v[4], v[5], 3, 2, true};
                      ConvLstmState s{v[7], v[8]};
                      for (int k = 0; k < 2; ++k) s = convlstm_step(vars, v[6], s);
                      return weighted(t, s.h, wh) + weighted(t, s.c, wc);
                  },
                  pts);
    }
    {
        const Tensor a = rnd({1, 3, 5, 5}, rng), b = rnd({1, 3, 5, 5}, rng);
        const Tensor wy = rnd({1, corr_channels(2, 1), 5, 5}, rng);
        grad_case(c, "corr",
                  [&](Tape& t, std::span<const Var> v) { return weighted(t, corr(v[0], v[1], {.max_displacement = 2}), wy); },
                  {a, b});
    }
    {
        const Tensor s = rnd({2, 2, 5, 6}, rng), u = rnd({2, 1, 5, 6}, rng, -2.5, 2.5), vv = rnd({2, 1, 5, 6}, rng, -2.5, 2.5);
        const Tensor wy = rnd({2, 2, 5, 6}, rng);
        grad_case(c, "warp", [&](Tape& t, std::span<const Var> v) { return weighted(t, warp(v[0], {v[1], v[2]}), wy); },
                  {s, u, vv}, kinked);
    }
    {
        const Tensor target = rnd({2, 1, 5, 5}, rng, 0, 1), pred = rnd({2, 1, 5, 5}, rng, 0, 1);
        const auto scheme = WeightScheme::normalized();
        grad_case(c, "weighted_pixel_loss",
                  [&](Tape&, std::span<const Var> v) { return weighted_pixel_loss(v[0], target, scheme); }, {pred}, kinked);
        for (int e : {1, 2}) {
            grad_case(c, "gdl_loss^" + std::to_string(e),
                      [&](Tape&, std::span<const Var> v) { return gdl_loss(v[0], target, e); }, {pred}, kinked);
            LossConfig lc;
            lc.gdl_exponent = e;
            grad_case(c, "total_loss^" + std::to_string(e),
                      [&](Tape&, std::span<const Var> v) { return total_loss(v[0], target, scheme, lc).total; }, {pred},
                      kinked);
        }
    }
    {
        // End to end: every parameter tensor, a few sampled coordinates each.
        const auto cfg = testing_support::tiny_config(16, 4);
        const auto params = init_params(cfg, 7);
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        std::vector<Tensor> pts;
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor t = params.at(i);
            // Move peepholes, biases and GroupNorm offsets off their exact-zero init.
            for (double& x : t.data())
                if (x == 0.0) x = jitter(rng);
            pts.push_back(std::move(t));
        }
        Batch batch{rnd({2, 2, 1, 16, 16}, rng, 0, 1), rnd({2, 2, 1, 16, 16}, rng, 0, 1)};
        const auto names = params.names();
        const MultiScalarFn f = [&](Tape& t, std::span<const Var> v) { return e2e_loss(t, cfg, names, v, batch); };
        // The loss sums kinked terms over every pixel and unit, so a smaller
        // step than the per-op checks keeps most stencils kink free.
        GradCheckOptions opt = kinked;
        opt.eps = 1e-5;
        opt.max_coords_per_input = 6;
        opt.seed = 3;
        grad_case(c, "e2e J2/K2 rollout", f, pts, opt);
        c.note("e2e: " + std::to_string(pts.size()) + " parameter tensors, step " + fmt(opt.eps) +
               ", rounding resolution " + fmt(resolution(f, pts, opt.eps)));
    }
    const double secs = seconds_since(t0);
    c.expect(secs <= 300, "runtime " + fmt(secs) + " s");
    c.note("runtime " + fmt(secs) + " s");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 1 gradient suite: ") + c.summary();
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence

constexpr int kInstances = 100;
constexpr double kRealTol = 1e-12;

std::string criterion_oracles() {
    Checks c;
    std::mt19937_64 rng(202);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    double worst_corr = 0, worst_warp = 0, worst_lstm = 0, worst_skill = 0, worst_bal = 0;
    int count_mismatch = 0;

    for (int i = 0; i < kInstances; ++i) {
        const int n = pick(1, 2), ch = pick(1, 5), h = pick(2, 9), w = pick(2, 9), d = pick(0, 4), s = pick(1, 3);
        const Tensor a = rnd({n, ch, h, w}, rng), b = rnd({n, ch, h, w}, rng);
        Tape tape;
        const Var y = corr(tape.constant(a), tape.constant(b), {.max_displacement = d, .stride = s});
        worst_corr = std::max(worst_corr, oracle::rel_error(y.value(), oracle::corr(a, b, d, s)));
    }
    for (int i = 0; i < kInstances; ++i) {
        const int n = pick(1, 2), ch = pick(1, 4), h = pick(1, 8), w = pick(1, 8);
        const double reach = 0.5 * std::max(h, w) + 1;
        const Tensor src = rnd({n, ch, h, w}, rng), u = rnd({n, 1, h, w}, rng, -reach, reach), v = rnd({n, 1, h, w}, rng, -reach, reach);
        Tape tape;
        const Var y = warp(tape.constant(src), {tape.constant(u), tape.constant(v)});
        worst_warp = std::max(worst_warp, oracle::rel_error(y.value(), oracle::warp(src, u, v)));
    }
    for (int i = 0; i < kInstances; ++i) {
        const int n = pick(1, 2), in = pick(1, 4), hid = pick(1, 4), h = pick(2, 7), w = pick(2, 7), dil = pick(1, 2);
        const bool peep = pick(0, 3) != 0;
        auto p = make_convlstm_params(in, hid, h, w, dil, peep);
        for (Tensor* t : {&p.w_x, &p.w_h, &p.bias, &p.w_ci, &p.w_cf, &p.w_co}) *t = rnd(t->shape(), rng, -0.5, 0.5);
        const Tensor x = rnd({n, in, h, w}, rng), h0 = rnd({n, hid, h, w}, rng), c0 = rnd({n, hid, h, w}, rng, -2, 2);
        Tape tape;
        const auto got = convlstm_step(bind(tape, p, false), tape.constant(x), {tape.constant(h0), tape.constant(c0)});
        const auto want = oracle::convlstm(x, h0, c0, p.w_x, p.w_h, p.bias, p.w_ci, p.w_cf, p.w_co, dil, peep);
        worst_lstm = std::max({worst_lstm, oracle::rel_error(got.h.value(), want.h), oracle::rel_error(got.c.value(), want.c)});
    }
    for (int i = 0; i < kInstances; ++i) {
        const int k = pick(1, 4), h = pick(1, 12), w = pick(1, 12);
        const Tensor p = rnd({k, h, w}, rng, 0, 1), t = rnd({k, h, w}, rng, 0, 1);
        const double tau = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        const auto got = confusion(p, t, tau), want = oracle::confusion(p, t, tau);
        count_mismatch += !(got == want);
        const auto sc = skill_scores(got);
        worst_skill = std::max({worst_skill, oracle::rel_error(sc.csi, oracle::csi(want)), oracle::rel_error(sc.hss, oracle::hss(want))});
        // Balanced errors in both the normalized and the dBZ domain.
        const auto e = balanced_errors(p, t, WeightScheme::normalized());
        const auto o = oracle::balanced(p, t, WeightScheme::normalized().thresholds, WeightScheme::normalized().weights);
        Tensor pd = p, td = t;
        for (double& x : pd.data()) x = x * 70.0 - 10.0;
        for (double& x : td.data()) x = x * 70.0 - 10.0;
        const auto srad = WeightScheme::srad_dbz();
        const auto ed = balanced_errors(pd, td, srad);
        const auto od = oracle::balanced(pd, td, srad.thresholds, srad.weights);
        worst_bal = std::max({worst_bal, oracle::rel_error(e.bmse, o.bmse), oracle::rel_error(e.bmae, o.bmae),
                              oracle::rel_error(ed.bmse, od.bmse), oracle::rel_error(ed.bmae, od.bmae)});
    }
    c.expect(worst_corr <= kRealTol, "corr rel " + fmt(worst_corr));
    c.expect(worst_warp <= kRealTol, "warp rel " + fmt(worst_warp));
    c.expect(worst_lstm <= kRealTol, "convlstm_step rel " + fmt(worst_lstm));
    c.expect(count_mismatch == 0, std::to_string(count_mismatch) + " confusion count mismatches");
    c.expect(worst_skill <= kRealTol, "skill_scores rel " + fmt(worst_skill));
    c.expect(worst_bal <= kRealTol, "balanced_errors rel " + fmt(worst_bal));
    c.note(std::to_string(kInstances) + " instances each, worst rel " +
           fmt(std::max({worst_corr, worst_warp, worst_lstm, worst_skill, worst_bal})));
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 2 oracle equivalence: ") + c.summary();
}

// ---------------------------------------------------------------------------
// 3. Formula fixtures

std::string criterion_fixtures() {
    Checks c;
    const auto hko = WeightScheme::hko_rainrate(), srad = WeightScheme::srad_dbz();
    // Interval tables written out by hand; a boundary value takes the upper row.
    const std::vector<std::pair<double, double>> rain{{0, 1},  {1.99, 1}, {2, 2},   {4.9, 2},  {5, 5},  {7, 5},
                                                      {9.99, 5}, {10, 10}, {29.9, 10}, {30, 30}, {120, 30}};
    for (auto [r, w] : rain) c.expect(pixel_weight(r, hko) == w, "w(r=" + fmt(r) + ")");
    const std::vector<std::pair<double, double>> refl{{0, 1},    {19.9, 1}, {20, 2},  {29.9, 2},  {30, 5},  {39.9, 5},
                                                      {40, 10}, {45, 10},  {49.9, 10}, {50, 30}, {80, 30}};
    for (auto [x, w] : refl) c.expect(pixel_weight(x, srad) == w, "w(x=" + fmt(x) + ")");

    // dBZ = k/100 on [-30, 90]: pixel = floor((255 (k + 1000) + 3500) / 7000) exactly, then clipped.
    int grid_bad = 0, grid = 0;
    for (long k = -3000; k <= 9000; ++k, ++grid) {
        const long num = 255 * (k + 1000) + 3500;
        long want = num >= 0 ? num / 7000 : -((-num + 6999) / 7000);
        want = std::clamp(want, 0L, 255L);
        grid_bad += dbz_to_pixel(static_cast<double>(k) / 100.0) != want;
    }
    c.expect(grid_bad == 0, std::to_string(grid_bad) + " of " + std::to_string(grid) + " dBZ grid points");
    int trip_bad = 0;
    for (int px = 0; px < 256; ++px) trip_bad += dbz_to_pixel(pixel_to_dbz(px)) != px;
    c.expect(trip_bad == 0, std::to_string(trip_bad) + " pixel round trips");

    c.expect(skill_scores({2, 1, 0, 1}).csi == 0.5, "CSI fixture");
    c.expect(std::abs(skill_scores({2, 1, 4, 1}).hss - 7.0 / 30.0) <= 1e-15, "HSS fixture");
    c.note(std::to_string(grid) + " dBZ grid points");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 3 formula fixtures: ") + c.summary();
}

// ---------------------------------------------------------------------------
// 4. Shape conformance

std::string criterion_shapes() {
    Checks c;
    ModelConfig cfg;  // 64x64, default layer widths
    const auto params = init_params(cfg, 1);
    Tape tape;
    BoundParams bound(tape, params, false);
    FdNet net(cfg, bound);
    std::mt19937_64 rng(404);
    const Var x = tape.constant(rnd({1, 1, 64, 64}, rng, 0, 1));
    const Var m = net.encode_position(x), s = net.encode_shape(x);
    c.expect(m.shape() == Shape{1, 64, 8, 8}, "position features " + shape_str(m.shape()));
    c.expect(s.shape() == Shape{1, 64, 8, 8}, "shape features " + shape_str(s.shape()));
    const Var y = net.combine_decode(m, s);
    c.expect(y.shape() == Shape{1, 1, 64, 64}, "decoded frame " + shape_str(y.shape()));
    const Var f = tape.constant(rnd({1, 4, 32, 32}, rng));
    const Var cv = corr(f, f, {.max_displacement = 11, .stride = 1});
    c.expect(cv.shape() == Shape{1, 529, 32, 32}, "corr " + shape_str(cv.shape()));
    c.note("64x64 -> " + shape_str(m.shape()) + " -> " + shape_str(y.shape()) + "; corr d=11 gives " +
           std::to_string(cv.shape()[1]) + " channels");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 4 shape conformance: ") + c.summary();
}

// ---------------------------------------------------------------------------
// 5-7. Training experiments

ModelConfig desk_model() { return RunConfig::defaults().model; }

TrainConfig desk_train(std::int64_t iterations) {
    TrainConfig t;
    t.max_iterations = iterations;
    t.batch_size = 4;
    t.input_frames = 4;
    t.horizon = 6;
    t.adam.lr = 1e-4;
    t.clip_value = 50;
    t.seed = 1;
    return t;
}

std::vector<Sequence> blobs(int n, std::uint64_t seed, const std::string& prefix, Range speed = SynthConfig{}.speed) {
    SynthConfig s;
    s.num_sequences = n;
    s.seed = seed;
    s.speed = speed;
    s.id_prefix = prefix;
    return filter_noisy(gen_synthetic(s));
}

/// Mean over consecutive blocks of `span` rows; the smallest block mean.
double best_block_mean(const std::vector<LogRow>& log, std::size_t span) {
    double best = INFINITY, acc = 0;
    std::vector<double> train;
    for (const auto& r : log)
        if (r.split == "train") train.push_back(r.loss_total);
    for (std::size_t i = 0; i < train.size(); ++i) {
        acc += train[i];
        if (i >= span) acc -= train[i - span];
        if (i + 1 >= span) best = std::min(best, acc / static_cast<double>(span));
    }
    return best;
}

double tail_mean(const std::vector<LogRow>& log, std::size_t span) {
    std::vector<double> train;
    for (const auto& r : log)
        if (r.split == "train") train.push_back(r.loss_total);
    span = std::min(span, train.size());
    double acc = 0;
    for (std::size_t i = train.size() - span; i < train.size(); ++i) acc += train[i];
    return acc / static_cast<double>(span);
}

std::string criterion_overfit() {
    const auto t0 = Clock::now();
    Checks c;
    Dataset data;
    data.train = blobs(20, 505, "overfit");
    const auto cfg = desk_train(2000);
    const auto refs = window_index(data.train, cfg.input_frames, cfg.horizon, cfg.window_stride);
    // One epoch of batches: the loss must stay low over a full pass, not a lucky batch.
    const std::size_t epoch = (refs.size() + cfg.batch_size - 1) / cfg.batch_size;
    double first = 0;
    std::vector<double> recent;
    std::int64_t reached = -1;
    const auto result = train(cfg, desk_model(), data, std::nullopt, [&](const LogRow& row) {
        if (row.iteration == 1) first = row.loss_total;
        recent.push_back(row.loss_total);
        if (recent.size() > epoch) recent.erase(recent.begin());
        double mean = 0;
        for (double v : recent) mean += v;
        mean /= static_cast<double>(recent.size());
        if (recent.size() == epoch && mean <= 0.05 * first) {
            reached = row.iteration;
            return false;
        }
        return true;
    });
    const double best = best_block_mean(result.log, epoch);
    const double secs = seconds_since(t0);
    c.expect(reached > 0, "epoch-mean loss " + fmt(best) + " vs 5% of " + fmt(first) + " = " + fmt(0.05 * first));
    c.expect(secs <= 1800, "runtime " + fmt(secs) + " s");
    c.note(std::to_string(data.train.size()) + " sequences, " + std::to_string(refs.size()) + " windows; iteration-1 loss " +
           fmt(first) + ", best epoch mean " + fmt(best) + " (" + fmt(100.0 * best / first) + "%)" +
           (reached > 0 ? ", reached at iteration " + std::to_string(reached) : "") + ", " + fmt(secs) + " s");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 5 overfit: ") + c.summary();
}

std::string criterion_persistence() {
    const auto t0 = Clock::now();
    Checks c;
    // Blobs that clearly move; a few hundred sequences would be memorized.
    const Range speed{1.0, 2.5};
    Dataset data;
    data.train = blobs(1000, 606, "train", speed);
    const auto test = blobs(24, 6060, "test", speed);
    auto cfg = desk_train(3000);
    cfg.adam.lr = 1e-3;
    const auto model = desk_model();
    const auto result = train(cfg, model, data);
    const auto scheme = WeightScheme::normalized();
    const std::vector<double> thresholds = scheme.thresholds;
    const int J = cfg.input_frames, K = cfg.horizon;

    const auto fdnet_report = evaluate_windows(model, result.last.params, test, J, K, thresholds, scheme);
    SkillReport persistence(K, thresholds);
    for (const auto& seq : test)
        for (const auto& w : window(seq, J, K, 1)) {
            const Tensor last = w.inputs.select(J - 1);
            std::vector<Tensor> rep(static_cast<std::size_t>(K), last);
            persistence.merge(evaluate_rollout(Tensor::stack(rep), w.targets, thresholds, scheme));
        }
    const double fd_avg = fdnet_report.avg_bmse(), ps_avg = persistence.avg_bmse();
    const double fd6 = fdnet_report.bmse(K), ps6 = persistence.bmse(K);
    c.expect(fd_avg < ps_avg, "average BMSE " + fmt(fd_avg) + " vs persistence " + fmt(ps_avg));
    c.expect(fd6 <= 0.8 * ps6, "step-6 BMSE " + fmt(fd6) + " vs 0.8 x persistence " + fmt(0.8 * ps6));
    c.note("avg BMSE " + fmt(fd_avg) + " vs " + fmt(ps_avg) + ", step-6 " + fmt(fd6) + " vs " + fmt(ps6) + " (" +
           fmt(100.0 * (1.0 - fd6 / ps6)) + "% lower), " + std::to_string(fdnet_report.frames(1)) + " test windows, " +
           fmt(seconds_since(t0)) + " s");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 6 beats persistence: ") + c.summary();
}

std::string criterion_ablation() {
    const auto t0 = Clock::now();
    Checks c;
    SynthConfig s;
    s.num_sequences = 32;
    s.seed = 707;
    s.growth = {0.04, 0.1};  // strongly deforming blobs
    s.id_prefix = "deform";
    Dataset data;
    data.train = filter_noisy(gen_synthetic(s));
    auto cfg = desk_train(1500);
    cfg.adam.lr = 1e-3;
    const std::size_t tail = 150;

    auto final_loss = [&](ModelConfig m) { return tail_mean(train(cfg, m, data).log, tail); };
    const double full = final_loss(desk_model());
    auto no_def = desk_model();
    no_def.ablation.use_def_output = false;
    const double nd = final_loss(no_def);
    auto shared = desk_model();
    shared.ablation.separate_encoders = false;
    const double sh = final_loss(shared);
    c.expect(full < nd, "full " + fmt(full) + " vs use_def_output=false " + fmt(nd));
    c.expect(full < sh, "full " + fmt(full) + " vs separate_encoders=false " + fmt(sh));
    c.note("mean loss over the last " + std::to_string(tail) + " of " + std::to_string(cfg.max_iterations) +
           " iterations: full " + fmt(full) + ", no-def " + fmt(nd) + ", shared encoder " + fmt(sh) + ", " +
           fmt(seconds_since(t0)) + " s");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 7 ablation direction: ") + c.summary();
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence

std::string criterion_determinism() {
    Checks c;
    const auto model = testing_support::tiny_config(16, 4);
    SynthConfig s;
    s.num_sequences = 6;
    s.length = 8;
    s.height = s.width = 16;
    s.radius = {1.5, 3};
    s.seed = 808;
    Dataset data;
    data.train = gen_synthetic(s);
    TrainConfig cfg;
    cfg.max_iterations = 24;
    cfg.batch_size = 2;
    cfg.input_frames = 3;
    cfg.horizon = 3;
    cfg.adam.lr = 1e-3;
    cfg.seed = 8;

    const auto a = train(cfg, model, data), b = train(cfg, model, data);
    c.expect(a.log == b.log, "loss logs differ");
    c.expect(a.last == b.last, "final checkpoints differ");

    testing_support::TempDir dir("acceptance_ckpt");
    save_checkpoint(dir / "full.fdck", a.last);
    c.expect(load_checkpoint(dir / "full.fdck") == a.last, "checkpoint round trip");

    const std::int64_t stop = 12;
    const auto half = train(cfg, model, data, std::nullopt, [&](const LogRow& r) { return r.iteration < stop; });
    save_checkpoint(dir / "half.fdck", half.last);
    const auto resumed = train(cfg, model, data, load_checkpoint(dir / "half.fdck"));
    const std::size_t n = resumed.log.size();
    c.expect(n == static_cast<std::size_t>(cfg.max_iterations - stop) && n >= 10, std::to_string(n) + " resumed rows");
    bool same = n == a.log.size() - static_cast<std::size_t>(stop);
    for (std::size_t i = 0; same && i < n; ++i) same = resumed.log[i] == a.log[i + static_cast<std::size_t>(stop)];
    c.expect(same, "resumed log differs");
    c.expect(resumed.last.params == a.last.params && resumed.last.adam == a.last.adam, "resumed state differs");
    c.note(std::to_string(n) + " resumed iterations bitwise identical");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 8 determinism and persistence: ") + c.summary();
}

// ---------------------------------------------------------------------------
// 9. Data contracts

Sequence constant_frames(const std::vector<double>& levels, int size = 4) {
    Sequence s;
    s.id = "c";
    s.frames = Tensor({static_cast<std::int64_t>(levels.size()), 1, size, size});
    const std::int64_t px = size * size;
    for (std::size_t t = 0; t < levels.size(); ++t)
        for (std::int64_t i = 0; i < px; ++i) s.frames[static_cast<std::int64_t>(t) * px + i] = levels[t];
    return s;
}

std::string criterion_data() {
    Checks c;
    const auto kept = filter_noisy({constant_frames({0.4, 0.0, 0.6}), constant_frames({0.4, 0.3, 0.6}),
                                    constant_frames({0.2, 0.2, 0.0, 0.3})});
    c.expect(kept.size() == 1 && kept[0].frames.select(1).max_abs() == 0.3, "filter_noisy kept " + std::to_string(kept.size()));

    int bad = 0, grid = 0;
    for (int T = 1; T <= 45; ++T)
        for (int J = 2; J <= 22; ++J)
            for (int K = 1; K <= 21; ++K)
                for (int st = 1; st <= 4; ++st, ++grid) {
                    std::int64_t starts = 0;  // enumerate window starts directly
                    for (int b = 0; b + J + K <= T; b += st) ++starts;
                    bad += window_count(T, J, K, st) != starts;
                }
    c.expect(bad == 0, std::to_string(bad) + " of " + std::to_string(grid) + " window counts");
    c.expect(window_count(41, 21, 20, 1) == 1, "T=41 J=21 K=20");
    SynthConfig s;
    s.num_sequences = 1;
    s.length = 41;
    s.height = s.width = 8;
    s.growth = {0.0, 0.01};
    c.expect(window(gen_synthetic(s)[0], 21, 20, 1).size() == 1, "41-frame sequence windows");
    c.note(std::to_string(grid) + " (T,J,K,stride) points");
    return (c.ok() ? "PASS" : "FAIL") + std::string(" 9 data contracts: ") + c.summary();
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<std::string()>> criteria{
        criterion_gradients, criterion_oracles,     criterion_fixtures, criterion_shapes,      criterion_overfit,
        criterion_persistence, criterion_ablation, criterion_determinism, criterion_data};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(static_cast<int>(i) + 1)) continue;
        std::string line;
        try {
            line = criteria[i]();
        } catch (const std::exception& e) {
            line = "FAIL " + std::to_string(i + 1) + ": exception: " + e.what();
        }
        failed += line.rfind("PASS", 0) != 0;
        std::cout << line << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
