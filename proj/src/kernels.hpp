#pragma once

// Internal dense kernels shared by the convolution ops.

#include <cstdint>
#include <memory>

namespace fdnet::detail {

struct ConvGeometry {
    std::int64_t batch, channels, height, width;  // image side
    int kh, kw, sh, sw, ph, pw, dh, dw;
    std::int64_t out_h, out_w;                    // column side

    std::int64_t col_rows() const { return channels * kh * kw; }
    std::int64_t col_cols() const { return batch * out_h * out_w; }
};

/// Uninitialized scratch storage; every caller overwrites it in full.
struct Scratch {
    explicit Scratch(std::int64_t n) : p(new double[static_cast<std::size_t>(n)]) {}
    double* data() { return p.get(); }
    const double* data() const { return p.get(); }
    double& operator[](std::size_t i) { return p[i]; }
    std::unique_ptr<double[]> p;
};

/// col[(c,i,j)][(n,oy,ox)] = img[n,c,oy*sh-ph+i*dh, ox*sw-pw+j*dw] (zero outside).
void im2col(const double* img, const ConvGeometry& g, double* col);

/// Adjoint of im2col: accumulates col entries back into img (img is not cleared).
void col2im_add(const double* col, const ConvGeometry& g, double* img);

/// C[M,N] = alpha * op(A) * op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

/// [N,C,P] <-> [C,N*P] channel-major reorder.
void nchw_to_cn(const double* src, std::int64_t n, std::int64_t c, std::int64_t p, double* dst);
void cn_to_nchw(const double* src, std::int64_t n, std::int64_t c, std::int64_t p, double* dst);

}  // namespace fdnet::detail
