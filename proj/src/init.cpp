#include "init.hpp"

#include <cmath>

#include "fdnet/errors.hpp"

namespace fdnet::detail {

namespace {

void fill_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data()) v = dist(rng);
}

}  // namespace

void xavier_normal_blocks(Tensor& kernel, int blocks, std::mt19937_64& rng) {
    if (kernel.rank() != 4 || blocks < 1 || kernel.dim(0) % blocks != 0)
        throw ShapeError("xavier init expects a rank-4 kernel divisible into blocks");
    const double receptive = static_cast<double>(kernel.dim(2) * kernel.dim(3));
    const double fan_in = static_cast<double>(kernel.dim(1)) * receptive;
    const double fan_out = static_cast<double>(kernel.dim(0) / blocks) * receptive;
    fill_normal(kernel, std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

void xavier_normal_transposed(Tensor& kernel, std::mt19937_64& rng) {
    if (kernel.rank() != 4) throw ShapeError("xavier init expects a rank-4 kernel");
    const double receptive = static_cast<double>(kernel.dim(2) * kernel.dim(3));
    const double fan_in = static_cast<double>(kernel.dim(0)) * receptive;
    const double fan_out = static_cast<double>(kernel.dim(1)) * receptive;
    fill_normal(kernel, std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

}  // namespace fdnet::detail
