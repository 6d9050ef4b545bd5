#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fdnet/config.hpp"
#include "fdnet/errors.hpp"
#include "fdnet/trainer.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "tiny_model.hpp"

using namespace fdnet;
using testing_support::TempDir;
using testing_support::tiny_config;

namespace {

ParamSet grads_with_norm(double norm) {
    ParamSet g;
    g.add("a", Tensor({3}, {3, 0, 0}));
    g.add("b", Tensor({1}, {4}));
    for (std::size_t i = 0; i < g.size(); ++i)
        for (double& v : g.at(i).data()) v *= norm / 5.0;
    return g;
}

Dataset tiny_dataset(int n = 4) {
    SynthConfig sc;
    sc.num_sequences = n;
    sc.length = 6;
    sc.height = sc.width = 16;
    sc.radius = {1.5, 3};
    Dataset d;
    d.train = gen_synthetic(sc);
    sc.seed = 99;
    sc.num_sequences = 2;
    d.val = gen_synthetic(sc);
    return d;
}

TrainConfig tiny_train(std::int64_t iters) {
    TrainConfig c;
    c.max_iterations = iters;
    c.batch_size = 2;
    c.input_frames = 3;
    c.horizon = 2;
    c.adam.lr = 1e-3;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("gradient clipping") {
    auto g = grads_with_norm(100);
    CHECK(clip_gradients(g, 50) == doctest::Approx(100));
    CHECK(g.get("a")[0] == doctest::Approx(30));
    CHECK(g.get("b")[0] == doctest::Approx(40));
    CHECK(global_norm(g) <= 50 + 1e-6);
    auto small = grads_with_norm(10);
    const auto before = small;
    clip_gradients(small, 50);
    CHECK(small == before);
    auto bad = grads_with_norm(1);
    bad.get("a")[1] = std::nan("");
    CHECK_THROWS_AS(clip_gradients(bad, 50), NumericError);
    auto v = grads_with_norm(100);
    clip_gradient_values(v, 50);
    CHECK(v.get("b")[0] == 50);
    CHECK(v.get("a")[0] == 50);
}

TEST_CASE("adam") {
    ParamSet p;
    p.add("w", Tensor({4}, {1, -2, 3, 0.5}));
    ParamSet g;
    g.add("w", Tensor({4}, {0.3, -5, 2, -1e-3}));
    auto state = AdamState::init(p, AdamConfig{});
    const auto p0 = p;
    adam_step(state, p, g);
    for (int i = 0; i < 4; ++i) {
        const double sign = g.get("w")[i] > 0 ? 1 : -1;
        CHECK(std::abs((p.get("w")[i] - p0.get("w")[i]) + 1e-4 * sign) < 1e-4 * 1e-3);
    }
    CHECK(state.step == 1);

    auto q = p0;
    auto zs = AdamState::init(q, AdamConfig{});
    for (int i = 0; i < 5; ++i) adam_step(zs, q, q.zeros_like());
    CHECK(q == p0);

    // Quadratic 0.5 |x - c|^2 on ten parameters decreases after one step.
    std::mt19937_64 rng(1);
    ParamSet x;
    x.add("x", oracle::random_tensor({10}, rng));
    const Tensor c = oracle::random_tensor({10}, rng);
    auto loss = [&](const ParamSet& s) {
        double l = 0;
        for (int i = 0; i < 10; ++i) l += 0.5 * (s.get("x")[i] - c[i]) * (s.get("x")[i] - c[i]);
        return l;
    };
    for (double lr : {1e-4, 1e-3, 1e-2}) {
        auto xs = x;
        ParamSet grad;
        Tensor gv({10});
        for (int i = 0; i < 10; ++i) gv[i] = xs.get("x")[i] - c[i];
        grad.add("x", gv);
        auto st = AdamState::init(xs, AdamConfig{.lr = lr});
        const double l0 = loss(xs);
        adam_step(st, xs, grad);
        CHECK(loss(xs) < l0);
    }

    ParamSet bad;
    bad.add("w", Tensor({4}, std::nan("")));
    auto frozen = p;
    auto st2 = AdamState::init(frozen, AdamConfig{});
    CHECK_THROWS_AS(adam_step(st2, frozen, bad), NumericError);
    CHECK(frozen == p);
}

TEST_CASE("batch picks cover each epoch once") {
    std::multiset<std::size_t> seen;
    for (int it = 1; it <= 5; ++it)
        for (auto i : batch_picks(it, 2, 10, 3)) seen.insert(i);
    for (std::size_t i = 0; i < 10; ++i) CHECK(seen.count(i) == 1);
    CHECK(batch_picks(7, 4, 13, 1) == batch_picks(7, 4, 13, 1));
    CHECK(batch_picks(1, 10, 10, 1) != batch_picks(2, 10, 10, 1));
}

TEST_CASE("checkpoint round trip and refusals") {
    TempDir dir("ck");
    const auto model = tiny_config(16, 4);
    Checkpoint c;
    c.model = model;
    c.model_digest = digest(to_json(model));
    c.train_digest = "t";
    c.loss_digest = "l";
    c.params = init_params(model, 1);
    c.adam = AdamState::init(c.params, AdamConfig{});
    c.adam.m.at(0)[0] = 0.1 + 1e-17;
    c.adam.step = 3;
    c.iteration = 42;
    c.best_val_bmse = 1.0 / 3.0;
    save_checkpoint(dir / "a.fdck", c);
    const auto back = load_checkpoint(dir / "a.fdck");
    CHECK(back == c);
    CHECK_NOTHROW(require_compatible(back, model));

    auto other = model;
    other.flow_hidden = 8;
    CHECK_THROWS_AS(require_compatible(back, other), ConfigError);
    CHECK_NOTHROW(require_compatible(back, other, true));

    std::string bytes;
    {
        std::ifstream f(dir / "a.fdck", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(f), {});
    }
    CHECK(bytes.substr(0, 4) == "FDCK");
    {
        std::ofstream f(dir / "t.fdck", std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "t.fdck"), doctest::Contains("truncated"), IoError);
    bytes[bytes.size() / 2] ^= 0x40;
    {
        std::ofstream f(dir / "x.fdck", std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "x.fdck"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "none.fdck"), IoError);
}

TEST_CASE("short training is deterministic and resumes identically") {
    const auto model = tiny_config(16, 4);
    const auto data = tiny_dataset();
    auto cfg = tiny_train(6);
    const auto a = train(cfg, model, data);
    const auto b = train(cfg, model, data);
    REQUIRE(a.log.size() == 6);
    CHECK(a.log == b.log);
    CHECK(a.last == b.last);
    for (const auto& r : a.log) CHECK(std::isfinite(r.loss_total));
    CHECK(a.log[0].p_teacher == doctest::Approx(1.0 - 1.0 / 3.0));

    // Stop after three iterations; the schedule still spans all six.
    const auto half = train(cfg, model, data, std::nullopt, [](const LogRow& row) { return row.iteration < 3; });
    REQUIRE(half.last.iteration == 3);
    TempDir dir("resume");
    save_checkpoint(dir / "h.fdck", half.last);
    const auto resumed = train(cfg, model, data, load_checkpoint(dir / "h.fdck"));
    REQUIRE(resumed.log.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(resumed.log[i] == a.log[i + 3]);
    CHECK(resumed.last.params == a.last.params);
}

TEST_CASE("validation rows and best checkpoint") {
    TempDir dir("val");
    const auto model = tiny_config(16, 4);
    auto cfg = tiny_train(4);
    cfg.eval_every = 2;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_dir = dir.path().string();
    const auto r = train(cfg, model, tiny_dataset());
    int val_rows = 0;
    for (const auto& row : r.log) val_rows += row.split == "val";
    CHECK(val_rows == 2);
    REQUIRE(r.best.has_value());
    CHECK(r.best->best_val_bmse > 0);
    for (const char* f : {"best.fdck", "last.fdck", "iter_000002.fdck", "iter_000004.fdck"})
        CHECK(std::filesystem::exists(dir / f));
    std::ostringstream os;
    write_log_csv(os, r.log);
    CHECK(os.str().rfind("iteration,split,loss_pixel,loss_gdl,loss_total,p_teacher\n", 0) == 0);
}

TEST_CASE("training input errors") {
    const auto model = tiny_config(16, 4);
    auto data = tiny_dataset();
    auto cfg = tiny_train(1);
    cfg.input_frames = 5;
    cfg.horizon = 5;
    CHECK_THROWS_AS(train(cfg, model, data), ShapeError);
    cfg = tiny_train(1);
    cfg.clip_value = 0;
    CHECK_THROWS_AS(train(cfg, model, data), ConfigError);
    CHECK_THROWS_AS(train(tiny_train(1), tiny_config(32, 4), data), ShapeError);
}
