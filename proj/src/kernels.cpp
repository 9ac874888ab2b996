#include "alforge/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace alforge::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

ConvDims conv_dims(int n, int c, int h, int w, int f, int kh, int kw, int stride, int padding) {
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    ConvDims d;
    d.n = n; d.c = c; d.h = h; d.w = w;
    d.f = f; d.kh = kh; d.kw = kw;
    d.stride = stride; d.padding = padding;
    d.oh = (h + 2 * padding - kh) / stride + 1;
    d.ow = (w + 2 * padding - kw) / stride + 1;
    return d;
}

// Valid output-column range for a given kernel column: 0 <= ox*s + kx - p < W.
static inline void ox_range(int kx, const ConvDims& d, int& xlo, int& xhi) {
    xlo = std::max(0, ceil_div(d.padding - kx, d.stride));
    xhi = std::min(d.ow, (d.w - 1 - kx + d.padding) / d.stride + 1);
}

// The serial and OpenMP variants share the per-element accumulation
// order: the omp loops only distribute independent (n, channel) blocks,
// so outputs are bit-identical between the two.

template <bool Parallel>
static void conv2d_forward_impl(const double* in, const double* ker, double* out, const ConvDims& d) {
    const int64_t out_n = int64_t(d.n) * d.f * d.oh * d.ow;
    for (int64_t i = 0; i < out_n; ++i) out[i] = 0.0;
#pragma omp parallel for collapse(2) if (Parallel)
    for (int n = 0; n < d.n; ++n) {
        for (int f = 0; f < d.f; ++f) {
            for (int c = 0; c < d.c; ++c) {
                const double* inc = in + (int64_t(n) * d.c + c) * d.h * d.w;
                for (int ky = 0; ky < d.kh; ++ky) {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const double wgt = ker[((int64_t(f) * d.c + c) * d.kh + ky) * d.kw + kx];
                        int xlo, xhi;
                        ox_range(kx, d, xlo, xhi);
                        for (int oy = 0; oy < d.oh; ++oy) {
                            const int iy = oy * d.stride + ky - d.padding;
                            if (iy < 0 || iy >= d.h) continue;
                            const double* irow = inc + int64_t(iy) * d.w + kx - d.padding;
                            double* orow = out + ((int64_t(n) * d.f + f) * d.oh + oy) * d.ow;
                            if (d.stride == 1) {
                                for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wgt * irow[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wgt * irow[int64_t(ox) * d.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <bool Parallel>
static void conv2d_backward_input_impl(const double* dout, const double* ker, double* din, const ConvDims& d) {
#pragma omp parallel for collapse(2) if (Parallel)
    for (int n = 0; n < d.n; ++n) {
        for (int c = 0; c < d.c; ++c) {
            double* dinc = din + (int64_t(n) * d.c + c) * d.h * d.w;
            for (int f = 0; f < d.f; ++f) {
                for (int ky = 0; ky < d.kh; ++ky) {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const double wgt = ker[((int64_t(f) * d.c + c) * d.kh + ky) * d.kw + kx];
                        int xlo, xhi;
                        ox_range(kx, d, xlo, xhi);
                        for (int oy = 0; oy < d.oh; ++oy) {
                            const int iy = oy * d.stride + ky - d.padding;
                            if (iy < 0 || iy >= d.h) continue;
                            double* drow = dinc + int64_t(iy) * d.w + kx - d.padding;
                            const double* orow = dout + ((int64_t(n) * d.f + f) * d.oh + oy) * d.ow;
                            if (d.stride == 1) {
                                for (int ox = xlo; ox < xhi; ++ox) drow[ox] += wgt * orow[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox) drow[int64_t(ox) * d.stride] += wgt * orow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <bool Parallel>
static void conv2d_backward_kernel_impl(const double* dout, const double* in, double* dker, const ConvDims& d) {
#pragma omp parallel for collapse(2) if (Parallel)
    for (int f = 0; f < d.f; ++f) {
        for (int c = 0; c < d.c; ++c) {
            for (int ky = 0; ky < d.kh; ++ky) {
                for (int kx = 0; kx < d.kw; ++kx) {
                    int xlo, xhi;
                    ox_range(kx, d, xlo, xhi);
                    double acc = 0.0;
                    for (int n = 0; n < d.n; ++n) {
                        const double* inc = in + (int64_t(n) * d.c + c) * d.h * d.w;
                        for (int oy = 0; oy < d.oh; ++oy) {
                            const int iy = oy * d.stride + ky - d.padding;
                            if (iy < 0 || iy >= d.h) continue;
                            const double* irow = inc + int64_t(iy) * d.w + kx - d.padding;
                            const double* orow = dout + ((int64_t(n) * d.f + f) * d.oh + oy) * d.ow;
                            if (d.stride == 1) {
#pragma omp simd reduction(+ : acc)
                                for (int ox = xlo; ox < xhi; ++ox) acc += orow[ox] * irow[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox) acc += orow[ox] * irow[int64_t(ox) * d.stride];
                            }
                        }
                    }
                    dker[((int64_t(f) * d.c + c) * d.kh + ky) * d.kw + kx] += acc;
                }
            }
        }
    }
}

void conv2d_forward_serial(const double* in, const double* ker, double* out, const ConvDims& d) {
    conv2d_forward_impl<false>(in, ker, out, d);
}
void conv2d_forward_omp(const double* in, const double* ker, double* out, const ConvDims& d) {
    conv2d_forward_impl<true>(in, ker, out, d);
}
void conv2d_forward(const double* in, const double* ker, double* out, const ConvDims& d) {
    parallel_enabled() ? conv2d_forward_omp(in, ker, out, d) : conv2d_forward_serial(in, ker, out, d);
}

void conv2d_backward_input_serial(const double* dout, const double* ker, double* din, const ConvDims& d) {
    conv2d_backward_input_impl<false>(dout, ker, din, d);
}
void conv2d_backward_input_omp(const double* dout, const double* ker, double* din, const ConvDims& d) {
    conv2d_backward_input_impl<true>(dout, ker, din, d);
}
void conv2d_backward_input(const double* dout, const double* ker, double* din, const ConvDims& d) {
    parallel_enabled() ? conv2d_backward_input_omp(dout, ker, din, d)
                       : conv2d_backward_input_serial(dout, ker, din, d);
}

void conv2d_backward_kernel_serial(const double* dout, const double* in, double* dker, const ConvDims& d) {
    conv2d_backward_kernel_impl<false>(dout, in, dker, d);
}
void conv2d_backward_kernel_omp(const double* dout, const double* in, double* dker, const ConvDims& d) {
    conv2d_backward_kernel_impl<true>(dout, in, dker, d);
}
void conv2d_backward_kernel(const double* dout, const double* in, double* dker, const ConvDims& d) {
    parallel_enabled() ? conv2d_backward_kernel_omp(dout, in, dker, d)
                       : conv2d_backward_kernel_serial(dout, in, dker, d);
}

}  // namespace alforge::kernels
