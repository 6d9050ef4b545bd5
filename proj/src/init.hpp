#pragma once

#include <random>

#include "fdnet/tensor.hpp"

namespace fdnet::detail {

/// Fills a conv kernel [out, in, kh, kw] with N(0, 2/(fan_in+fan_out)),
/// treating the output axis as `blocks` independent kernels.
void xavier_normal_blocks(Tensor& kernel, int blocks, std::mt19937_64& rng);

/// Same for a transposed-conv kernel [in, out, kh, kw].
void xavier_normal_transposed(Tensor& kernel, std::mt19937_64& rng);

}  // namespace fdnet::detail
