#pragma once

#include "alforge/tensor.hpp"

namespace alforge::ops {

// Elementwise / scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// k * a + c, elementwise
Tensor affine(const Tensor& a, double k, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// [C,h,w] -> [C], per-channel spatial average
Tensor spatial_mean(const Tensor& a);
// [C,h,w] x [h,w] -> [C]: per-channel spatial average of mask * features
Tensor masked_channel_mean(const Tensor& features, const Tensor& mask);
// [H,W] -> [th,tw] block average; H,W must be multiples of th,tw
Tensor downsample_avg(const Tensor& a, int target_h, int target_w);

// Shape ops
Tensor reshape(const Tensor& a, Shape new_shape);
// [C,H,W] -> [C,2H,2W]
Tensor upsample_nearest2x(const Tensor& a);
// [Ca,H,W] + [Cb,H,W] -> [Ca+Cb,H,W]
Tensor concat_channels(const Tensor& a, const Tensor& b);

// cosine = dot(a,b) / (|a||b|), clamped to [-1,1]; exactly 0 when either
// norm < eps
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

// Conv
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
// [N,F,H,W] + [F] per-channel bias
Tensor bias_add(const Tensor& a, const Tensor& bias);

}  // namespace alforge::ops
