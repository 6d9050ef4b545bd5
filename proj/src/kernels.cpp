#include "kernels.hpp"

#include <Eigen/Core>

#include <cstring>

namespace fdnet::detail {

void im2col(const double* img, const ConvGeometry& g, double* col) {
    const std::int64_t plane = g.height * g.width;
    const std::int64_t out_plane = g.out_h * g.out_w;
    const std::int64_t cols = g.col_cols();
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                double* row = col + ((c * g.kh + i) * g.kw + j) * cols;
                for (std::int64_t n = 0; n < g.batch; ++n) {
                    const double* src = img + (n * g.channels + c) * plane;
                    double* dst = row + n * out_plane;
                    for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
                        const std::int64_t y = oy * g.sh - g.ph + i * g.dh;
                        double* drow = dst + oy * g.out_w;
                        if (y < 0 || y >= g.height) {
                            std::memset(drow, 0, sizeof(double) * static_cast<std::size_t>(g.out_w));
                            continue;
                        }
                        const double* srow = src + y * g.width;
                        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                            const std::int64_t x = ox * g.sw - g.pw + j * g.dw;
                            drow[ox] = (x >= 0 && x < g.width) ? srow[x] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
    const std::int64_t plane = g.height * g.width;
    const std::int64_t out_plane = g.out_h * g.out_w;
    const std::int64_t cols = g.col_cols();
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                const double* row = col + ((c * g.kh + i) * g.kw + j) * cols;
                for (std::int64_t n = 0; n < g.batch; ++n) {
                    double* dst = img + (n * g.channels + c) * plane;
                    const double* src = row + n * out_plane;
                    for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
                        const std::int64_t y = oy * g.sh - g.ph + i * g.dh;
                        if (y < 0 || y >= g.height) continue;
                        double* drow = dst + y * g.width;
                        const double* srow = src + oy * g.out_w;
                        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                            const std::int64_t x = ox * g.sw - g.pw + j * g.dw;
                            if (x >= 0 && x < g.width) drow[x] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
    // Eigen rather than OpenBLAS: the 0.3.20 DGEMM kernels picked for
    // Cooper Lake return wrong products for many shapes.
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Stride = Eigen::OuterStride<>;
    Eigen::Map<Mat> cm(c, m, n);
    if (beta == 0.0)
        cm.setZero();
    else if (beta != 1.0)
        cm *= beta;
    auto run = [&](const auto& am, const auto& bm) { cm.noalias() += alpha * am * bm; };
    const Eigen::Map<const Mat, 0, Stride> an(a, m, k, Stride(k)), at(a, k, m, Stride(m));
    const Eigen::Map<const Mat, 0, Stride> bn(b, k, n, Stride(n)), bt(b, n, k, Stride(k));
    if (!trans_a && !trans_b)
        run(an, bn);
    else if (!trans_a)
        run(an, bt.transpose());
    else if (!trans_b)
        run(at.transpose(), bn);
    else
        run(at.transpose(), bt.transpose());
}

void nchw_to_cn(const double* src, std::int64_t n, std::int64_t c, std::int64_t p, double* dst) {
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            std::memcpy(dst + ch * n * p + b * p, src + (b * c + ch) * p, sizeof(double) * static_cast<std::size_t>(p));
}

void cn_to_nchw(const double* src, std::int64_t n, std::int64_t c, std::int64_t p, double* dst) {
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            std::memcpy(dst + (b * c + ch) * p, src + ch * n * p + b * p, sizeof(double) * static_cast<std::size_t>(p));
}

}  // namespace fdnet::detail
