#pragma once

#include <cstddef>

namespace alforge::kernels {

// Global switch between the OpenMP kernels and the serial reference
// implementations. Both produce bit-identical output (the parallel
// loops are gather-style, no cross-thread reductions), so the switch
// exists for testing and benchmarking.
void set_parallel(bool enabled);
bool parallel_enabled();

struct ConvDims {
    int n, c, h, w;       // input
    int f, kh, kw;        // kernel
    int stride, padding;
    int oh, ow;           // output
};

ConvDims conv_dims(int n, int c, int h, int w, int f, int kh, int kw, int stride, int padding);

// out[n,f,oh,ow] = sum_{c,ky,kx} in[n,c,oh*s+ky-p,ow*s+kx-p] * ker[f,c,ky,kx]
void conv2d_forward_serial(const double* in, const double* ker, double* out, const ConvDims& d);
void conv2d_forward_omp(const double* in, const double* ker, double* out, const ConvDims& d);
void conv2d_forward(const double* in, const double* ker, double* out, const ConvDims& d);

// Accumulates (+=) into din / dker.
void conv2d_backward_input_serial(const double* dout, const double* ker, double* din, const ConvDims& d);
void conv2d_backward_input_omp(const double* dout, const double* ker, double* din, const ConvDims& d);
void conv2d_backward_input(const double* dout, const double* ker, double* din, const ConvDims& d);

void conv2d_backward_kernel_serial(const double* dout, const double* in, double* dker, const ConvDims& d);
void conv2d_backward_kernel_omp(const double* dout, const double* in, double* dker, const ConvDims& d);
void conv2d_backward_kernel(const double* dout, const double* in, double* dker, const ConvDims& d);

}  // namespace alforge::kernels
