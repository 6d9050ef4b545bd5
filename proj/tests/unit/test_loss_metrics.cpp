#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fdnet/errors.hpp"
#include "fdnet/grad_check.hpp"
#include "fdnet/loss.hpp"
#include "fdnet/metrics.hpp"
#include "fdnet/units.hpp"
#include "oracles.hpp"

using namespace fdnet;

TEST_CASE("pixel weights") {
    const auto hko = WeightScheme::hko_rainrate(), srad = WeightScheme::srad_dbz();
    CHECK(pixel_weight(1, hko) == 1);
    CHECK(pixel_weight(2, hko) == 2);
    CHECK(pixel_weight(7, hko) == 5);
    CHECK(pixel_weight(50, hko) == 30);
    CHECK(pixel_weight(25, srad) == 2);
    CHECK(pixel_weight(45, srad) == 10);
    CHECK(pixel_weight(60, srad) == 30);
    CHECK(pixel_weight(123, WeightScheme::uniform()) == 1);
    CHECK(pixel_weight(0.3, WeightScheme::normalized()) == 2);
    double last = 0;
    for (double x = -10; x <= 70; x += 0.25) {
        CHECK(pixel_weight(x, srad) >= last);
        last = pixel_weight(x, srad);
    }
    CHECK_THROWS_AS(WeightScheme::custom({2, 1}, {1, 2, 3}, ValueDomain::kDbz), ConfigError);
    CHECK_THROWS_AS(WeightScheme::custom({1, 2}, {3, 2, 1}, ValueDomain::kDbz), ConfigError);
    CHECK(scheme_kind_from_string(to_string(SchemeKind::kSradDbz)) == SchemeKind::kSradDbz);
}

TEST_CASE("weighted pixel loss") {
    Tape tape;
    const auto srad = WeightScheme::srad_dbz();
    const Tensor target({1, 1, 1, 1}, 35.0);
    CHECK(weighted_pixel_loss(tape.constant(Tensor({1, 1, 1, 1}, 30.0)), target, srad).value().item() == 150.0);
    CHECK(weighted_pixel_loss(tape.constant(target), target, srad).value().item() == 0.0);
    std::mt19937_64 rng(1);
    const Tensor p = oracle::random_tensor({2, 1, 3, 3}, rng, 0, 1), t = oracle::random_tensor({2, 1, 3, 3}, rng, 0, 1);
    const Tensor w = weight_map_normalized(t, WeightScheme::normalized());
    Tensor w2 = w;
    for (double& v : w2.data()) v *= 2;
    const double l1 = weighted_pixel_loss(tape.constant(p), t, w).value().item();
    CHECK(weighted_pixel_loss(tape.constant(p), t, w2).value().item() == doctest::Approx(2 * l1).epsilon(1e-14));
}

TEST_CASE("gdl and total loss") {
    Tape tape;
    const Tensor t({1, 2}, {0, 1});
    const Var p = tape.constant(Tensor({1, 2}, {0, 0}));
    CHECK(gdl_loss(p, t).value().item() == 1.0);
    CHECK(gdl_loss(tape.constant(Tensor({3, 3}, 0.4)), Tensor({3, 3}, 0.9)).value().item() == 0.0);
    CHECK(gdl_loss(tape.constant(t), t).value().item() == 0.0);

    const auto terms = total_loss(p, t, WeightScheme::uniform(), LossConfig{});
    CHECK(terms.total.value().item() == 3.0);
    LossConfig no_gdl;
    no_gdl.lambda_gdl = 0;
    std::mt19937_64 rng(2);
    const Tensor a = oracle::random_tensor({2, 4, 4}, rng, 0, 1), b = oracle::random_tensor({2, 4, 4}, rng, 0, 1);
    const auto scheme = WeightScheme::normalized();
    CHECK(total_loss(tape.constant(a), b, scheme, no_gdl).total.value().item() ==
          weighted_pixel_loss(tape.constant(a), b, scheme).value().item());
    CHECK(total_loss(tape.constant(a), b, scheme, LossConfig{}, 2.0).total.value().item() ==
          doctest::Approx(total_loss(tape.constant(a), b, scheme, LossConfig{}).total.value().item() / 2));
    CHECK(total_loss(tape.constant(a), b, scheme, LossConfig{}).total.value().item() > 0);
    CHECK(total_loss(tape.constant(b), b, scheme, LossConfig{}).total.value().item() == 0);
    LossConfig bad;
    bad.lambda_pixel = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("loss gradients away from kinks") {
    std::mt19937_64 rng(3);
    const Tensor t = oracle::random_tensor({2, 1, 4, 4}, rng, 0, 1);
    const Tensor p = oracle::random_tensor({2, 1, 4, 4}, rng, 0, 1);
    GradCheckOptions opt;
    opt.kink_tolerance = 1e-2;
    for (int e : {1, 2}) {
        LossConfig cfg;
        cfg.gdl_exponent = e;
        const auto r = grad_check([&](Var x) { return total_loss(x, t, WeightScheme::normalized(), cfg).total; }, p, opt);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("dBZ and pixel conversion") {
    CHECK(dbz_to_pixel(-10) == 0);
    CHECK(dbz_to_pixel(60) == 255);
    CHECK(dbz_to_pixel(25) == 128);
    CHECK(dbz_to_pixel(-40) == 0);
    CHECK(dbz_to_pixel(90) == 255);
    for (int px = 0; px < 256; ++px) CHECK(dbz_to_pixel(pixel_to_dbz(px)) == px);
    CHECK(normalized_to_dbz(1.0) == doctest::Approx(60));
    CHECK(dbz_pixel_convert(25, ConvertDirection::kDbzToPixel) == 128);
}

TEST_CASE("confusion and skill") {
    const Tensor p({4}, {1, 1, 0, 0}), t({4}, {1, 0, 1, 0});
    const auto c = confusion(p, t, 0.5);
    CHECK(c == ConfusionCounts{1, 1, 1, 1});
    CHECK(confusion(t, t, 0.5).fp == 0);
    CHECK(confusion(p, t, 2.0) == ConfusionCounts{0, 0, 4, 0});
    CHECK(confusion(Tensor({1}, 0.5), Tensor({1}, 0.5), 0.5).tp == 1);

    CHECK(skill_scores({2, 1, 0, 1}).csi == 0.5);
    CHECK(skill_scores({2, 1, 4, 1}).hss == doctest::Approx(7.0 / 30).epsilon(1e-15));
    CHECK(skill_scores({3, 0, 5, 0}).csi == 1.0);
    CHECK(skill_scores({0, 0, 0, 0}).csi == 0.0);
    CHECK(skill_scores({0, 0, 0, 0}).hss == 0.0);
    // CSI ignores tn, HSS does not.
    CHECK(skill_scores({2, 1, 4, 1}).csi == skill_scores({2, 1, 9, 1}).csi);
    CHECK(skill_scores({2, 1, 4, 1}).hss != skill_scores({2, 1, 9, 1}).hss);
    CHECK_THROWS_AS(confusion(Tensor({2}), Tensor({3}), 0.5), ShapeError);
}

TEST_CASE("metrics against brute force") {
    std::mt19937_64 rng(4);
    const auto scheme = WeightScheme::normalized();
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor p = oracle::random_tensor({3, 8, 8}, rng, 0, 1), t = oracle::random_tensor({3, 8, 8}, rng, 0, 1);
        double last_tp = 1e300;
        for (double tau : {0.1, 0.25, 0.5, 0.75}) {
            const auto c = confusion(p, t, tau);
            CHECK(c == oracle::confusion(p, t, tau));
            CHECK(static_cast<double>(c.tp) <= last_tp);
            last_tp = static_cast<double>(c.tp);
            const auto s = skill_scores(c);
            CHECK(oracle::rel_error(s.csi, oracle::csi(c)) <= 1e-12);
            CHECK(oracle::rel_error(s.hss, oracle::hss(c)) <= 1e-12);
        }
        const auto e = balanced_errors(p, t, scheme);
        const auto o = oracle::balanced(p, t, scheme.thresholds, scheme.weights);
        CHECK(oracle::rel_error(e.bmse, o.bmse) <= 1e-12);
        CHECK(oracle::rel_error(e.bmae, o.bmae) <= 1e-12);
    }
}

TEST_CASE("balanced errors fixtures") {
    const auto srad = WeightScheme::srad_dbz();
    const auto e = balanced_errors(Tensor({1, 1, 1}, 30.0), Tensor({1, 1, 1}, 35.0), srad);
    CHECK(e.bmse == 125.0);
    CHECK(e.bmae == 25.0);
    const Tensor t({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(balanced_errors(t, t, srad).bmse == 0.0);
    const Tensor p({2, 2, 2}, {2, 2, 3, 4, 5, 6, 7, 5});
    const auto u = balanced_errors(p, t, WeightScheme::uniform());
    CHECK(u.bmse == doctest::Approx((1.0 + 9.0) / 2));
    CHECK(u.bmae == doctest::Approx((1.0 + 3.0) / 2));
}

TEST_CASE("skill report") {
    std::mt19937_64 rng(5);
    const auto scheme = WeightScheme::normalized();
    const Tensor t = oracle::random_tensor({20, 2, 1, 6, 6}, rng, 0, 1);
    const auto perfect = evaluate_rollout(t, t, {0.25, 0.5}, scheme);
    for (int k = 1; k <= 20; ++k) {
        CHECK(perfect.bmse(k) == 0.0);
        CHECK(perfect.csi(k, 0) == 1.0);
    }
    CHECK(perfect.minutes(5) == 30);
    CHECK(perfect.minutes(20) == 120);

    const Tensor p = oracle::random_tensor({20, 2, 1, 6, 6}, rng, 0, 1);
    const auto r = evaluate_rollout(p, t, {0.25, 0.5}, scheme);
    ConfusionCounts sum;
    for (int k = 1; k <= 20; ++k) sum += r.counts(k, 1);
    CHECK(sum == r.total_counts(1));
    CHECK(r.frames(3) == 2);
    // Per-frame mean differs from pooled in general, but both stay in range.
    for (int k = 1; k <= 20; ++k) {
        CHECK(r.csi(k, 0) >= 0.0);
        CHECK(r.csi(k, 0) <= 1.0);
        CHECK(r.hss(k, 0) >= -1.0);
        CHECK(r.hss(k, 0) <= 1.0);
    }
    std::ostringstream csv, fw, summary;
    r.write_csv(csv);
    r.write_framewise_csv(fw);
    r.write_summary(summary);
    CHECK(csv.str().rfind("lead_step,minutes,threshold,tp,fp,tn,fn,csi,hss,bmse,bmae\n", 0) == 0);
    CHECK(fw.str().rfind("lead_step,minutes,csi_0.25,hss_0.25,csi_0.5,hss_0.5\n", 0) == 0);
    const auto head = summary.str().substr(0, summary.str().find('\n'));
    for (const char* col : {"AVG", "30min", "60min", "90min", "120min"}) CHECK(head.find(col) != std::string::npos);
    CHECK_THROWS_AS(evaluate_rollout(p, oracle::random_tensor({19, 2, 1, 6, 6}, rng), {0.5}, scheme), ShapeError);
}
