#include "fdnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fdnet/errors.hpp"

namespace fdnet {

namespace {

double evaluate(const MultiScalarFn& f, std::span<const Tensor> points) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(points.size());
    for (const auto& p : points) vars.push_back(tape.constant(p));
    const double v = f(tape, vars).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
}

std::vector<std::int64_t> pick_coords(std::int64_t numel, std::size_t limit, std::mt19937_64& rng) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
    std::iota(idx.begin(), idx.end(), 0);
    if (limit == 0 || limit >= idx.size()) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckResult grad_check(const MultiScalarFn& f, std::span<const Tensor> points, const GradCheckOptions& opt) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& p : points) vars.push_back(tape.leaf(p, true));
        const Var root = f(tape, vars);
        const auto grads = tape.backward(root);
        for (const auto& v : vars) analytic.push_back(grads.of(v));
    }

    std::mt19937_64 rng(opt.seed);
    std::vector<Tensor> work(points.begin(), points.end());
    const double f0 = opt.kink_tolerance > 0.0 ? evaluate(f, work) : 0.0;
    auto at = [&](std::size_t k, std::int64_t i, double x) {
        work[k][i] = x;
        return evaluate(f, work);
    };
    GradCheckResult result;
    for (std::size_t k = 0; k < work.size(); ++k) {
        for (auto i : pick_coords(work[k].numel(), opt.max_coords_per_input, rng)) {
            const double orig = work[k][i], h = opt.eps;
            const double fp = at(k, i, orig + h);
            const double fm = at(k, i, orig - h);

            if (opt.kink_tolerance > 0.0) {
                const double fp2 = at(k, i, orig + 2 * h);
                const double fm2 = at(k, i, orig - 2 * h);
                const double s0 = (fm - fm2) / h, s1 = (f0 - fm) / h, s2 = (fp - f0) / h, s3 = (fp2 - fp) / h;
                const double jump = std::max(std::abs(s2 - 2 * s1 + s0), std::abs(s3 - 2 * s2 + s1));
                const double mag = std::max({std::abs(s1), std::abs(s2), 1e-8});
                // Rounding in f alone moves a slope by about eps_mach |f| / h.
                const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(f0) / h;
                work[k][i] = orig;
                if (jump > opt.kink_tolerance * mag + noise) {
                    ++result.excluded;
                    continue;
                }
            }
            work[k][i] = orig;
            const double numeric = (fp - fm) / (2.0 * opt.eps);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max(opt.abs_floor, std::abs(a) + std::abs(numeric));
            result.max_rel_error = std::max(result.max_rel_error, err);
            ++result.checked;
        }
    }
    return result;
}

GradCheckResult grad_check(const std::function<Var(Var)>& f, const Tensor& point, const GradCheckOptions& opt) {
    const MultiScalarFn wrapped = [&f](Tape&, std::span<const Var> vars) { return f(vars[0]); };
    return grad_check(wrapped, std::span<const Tensor>(&point, 1), opt);
}

}  // namespace fdnet
