#include "alforge/ops.hpp"

#include <cmath>

#include "alforge/kernels.hpp"

namespace alforge::ops {

namespace {

bool any_requires_grad(std::initializer_list<Tensor> ts) {
    for (const auto& t : ts)
        if (t.requires_grad()) return true;
    return false;
}

void record(Tensor out, std::vector<Tensor> inputs, std::function<void()> fn) {
    if (!out.requires_grad()) return;
    if (Tape* tape = active_tape()) tape->record(std::move(out), std::move(inputs), std::move(fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({a, b}));
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    record(out, {a, b}, [out, a, b]() mutable {
        const auto& go = out.grad();
        if (a.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
        if (b.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) b.grad()[i] += go[i];
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({a, b}));
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    record(out, {a, b}, [out, a, b]() mutable {
        const auto& go = out.grad();
        if (a.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
        if (b.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) b.grad()[i] -= go[i];
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({a, b}));
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    record(out, {a, b}, [out, a, b]() mutable {
        const auto& go = out.grad();
        if (a.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] * b.data()[i];
        if (b.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) b.grad()[i] += go[i] * a.data()[i];
    });
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({a, b}));
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] / b.data()[i];
    record(out, {a, b}, [out, a, b]() mutable {
        const auto& go = out.grad();
        if (a.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] / b.data()[i];
        if (b.requires_grad())
            for (size_t i = 0; i < go.size(); ++i)
                b.grad()[i] -= go[i] * a.data()[i] / (b.data()[i] * b.data()[i]);
    });
    return out;
}

Tensor affine(const Tensor& a, double k, double c) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = k * a.data()[i] + c;
    record(out, {a}, [out, a, k]() mutable {
        const auto& go = out.grad();
        for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += k * go[i];
    });
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    // subgradient at 0 taken as 0
    record(out, {a}, [out, a]() mutable {
        const auto& go = out.grad();
        for (size_t i = 0; i < go.size(); ++i)
            if (a.data()[i] > 0.0) a.grad()[i] += go[i];
    });
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
    record(out, {a}, [out, a]() mutable {
        const auto& go = out.grad();
        for (size_t i = 0; i < go.size(); ++i) {
            const double s = out.data()[i];
            a.grad()[i] += go[i] * s * (1.0 - s);
        }
    });
    return out;
}

Tensor log(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = std::log(a.data()[i]);
    record(out, {a}, [out, a]() mutable {
        const auto& go = out.grad();
        for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] / a.data()[i];
    });
    return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = std::min(hi, std::max(lo, a.data()[i]));
    record(out, {a, }, [out, a, lo, hi]() mutable {
        const auto& go = out.grad();
        for (size_t i = 0; i < go.size(); ++i)
            if (a.data()[i] >= lo && a.data()[i] <= hi) a.grad()[i] += go[i];
    });
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1}, a.requires_grad());
    double acc = 0.0;
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) acc += a.data()[i];
    out.data()[0] = acc;
    record(out, {a}, [out, a]() mutable {
        const double g = out.grad()[0];
        for (size_t i = 0; i < a.vec().size(); ++i) a.grad()[i] += g;
    });
    return out;
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::zeros({1}, a.requires_grad());
    double acc = 0.0;
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) acc += a.data()[i];
    out.data()[0] = acc * inv;
    record(out, {a}, [out, a, inv]() mutable {
        const double g = out.grad()[0] * inv;
        for (size_t i = 0; i < a.vec().size(); ++i) a.grad()[i] += g;
    });
    return out;
}

Tensor spatial_mean(const Tensor& a) {
    if (a.ndim() != 3) throw std::invalid_argument("spatial_mean: expected [C,h,w]");
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < 1 || w < 1) throw std::invalid_argument("spatial_mean: empty spatial extent");
    const double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor out = Tensor::zeros({c}, a.requires_grad());
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* p = a.data() + int64_t(ch) * h * w;
        for (int64_t i = 0; i < int64_t(h) * w; ++i) acc += p[i];
        out.data()[ch] = acc * inv;
    }
    record(out, {a}, [out, a, c, h, w, inv]() mutable {
        for (int ch = 0; ch < c; ++ch) {
            const double g = out.grad()[static_cast<size_t>(ch)] * inv;
            double* gp = a.grad().data() + int64_t(ch) * h * w;
            for (int64_t i = 0; i < int64_t(h) * w; ++i) gp[i] += g;
        }
    });
    return out;
}

Tensor masked_channel_mean(const Tensor& features, const Tensor& mask) {
    if (features.ndim() != 3) throw std::invalid_argument("masked_channel_mean: expected [C,h,w]");
    if (mask.ndim() != 2 || mask.dim(0) != features.dim(1) || mask.dim(1) != features.dim(2))
        throw std::invalid_argument("masked_channel_mean: mask/features spatial mismatch");
    const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
    const int64_t hw = int64_t(h) * w;
    const double inv = 1.0 / static_cast<double>(hw);
    Tensor out = Tensor::zeros({c}, any_requires_grad({features, mask}));
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* fp = features.data() + ch * hw;
        for (int64_t i = 0; i < hw; ++i) acc += mask.data()[i] * fp[i];
        out.data()[ch] = acc * inv;
    }
    record(out, {features, mask}, [out, features, mask, c, hw, inv]() mutable {
        if (features.requires_grad()) {
            for (int ch = 0; ch < c; ++ch) {
                const double g = out.grad()[static_cast<size_t>(ch)] * inv;
                double* gp = features.grad().data() + ch * hw;
                for (int64_t i = 0; i < hw; ++i) gp[i] += g * mask.data()[i];
            }
        }
        if (mask.requires_grad()) {
            for (int ch = 0; ch < c; ++ch) {
                const double g = out.grad()[static_cast<size_t>(ch)] * inv;
                const double* fp = features.data() + ch * hw;
                for (int64_t i = 0; i < hw; ++i) mask.grad()[i] += g * fp[i];
            }
        }
    });
    return out;
}

Tensor downsample_avg(const Tensor& a, int target_h, int target_w) {
    if (a.ndim() != 2) throw std::invalid_argument("downsample_avg: expected [H,W]");
    const int h = a.dim(0), w = a.dim(1);
    if (target_h < 1 || target_w < 1 || h % target_h != 0 || w % target_w != 0)
        throw std::invalid_argument("downsample_avg: target does not divide input size");
    const int bh = h / target_h, bw = w / target_w;
    const double inv = 1.0 / (static_cast<double>(bh) * bw);
    Tensor out = Tensor::zeros({target_h, target_w}, a.requires_grad());
    for (int oy = 0; oy < target_h; ++oy)
        for (int ox = 0; ox < target_w; ++ox) {
            double acc = 0.0;
            for (int by = 0; by < bh; ++by)
                for (int bx = 0; bx < bw; ++bx)
                    acc += a.data()[int64_t(oy * bh + by) * w + ox * bw + bx];
            out.data()[int64_t(oy) * target_w + ox] = acc * inv;
        }
    record(out, {a}, [out, a, target_h, target_w, bh, bw, w, inv]() mutable {
        for (int oy = 0; oy < target_h; ++oy)
            for (int ox = 0; ox < target_w; ++ox) {
                const double g = out.grad()[static_cast<size_t>(oy) * target_w + ox] * inv;
                for (int by = 0; by < bh; ++by)
                    for (int bx = 0; bx < bw; ++bx)
                        a.grad()[static_cast<size_t>(oy * bh + by) * w + ox * bw + bx] += g;
            }
    });
    return out;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) throw std::invalid_argument("reshape: numel mismatch");
    Tensor out = Tensor::from_data(std::move(new_shape), a.vec(), a.requires_grad());
    record(out, {a}, [out, a]() mutable {
        const auto& go = out.grad();
        for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
    });
    return out;
}

Tensor upsample_nearest2x(const Tensor& a) {
    if (a.ndim() != 3) throw std::invalid_argument("upsample_nearest2x: expected [C,H,W]");
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w}, a.requires_grad());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x)
                out.data()[(int64_t(ch) * 2 * h + y) * 2 * w + x] =
                    a.data()[(int64_t(ch) * h + y / 2) * w + x / 2];
    record(out, {a}, [out, a, c, h, w]() mutable {
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < 2 * h; ++y)
                for (int x = 0; x < 2 * w; ++x)
                    a.grad()[(static_cast<size_t>(ch) * h + y / 2) * w + x / 2] +=
                        out.grad()[(static_cast<size_t>(ch) * 2 * h + y) * 2 * w + x];
    });
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw std::invalid_argument("concat_channels: spatial dims differ");
    const int ca = a.dim(0), cb = b.dim(0), h = a.dim(1), w = a.dim(2);
    Tensor out = Tensor::zeros({ca + cb, h, w}, any_requires_grad({a, b}));
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    record(out, {a, b}, [out, a, b]() mutable {
        const auto& go = out.grad();
        const size_t na = a.vec().size();
        if (a.requires_grad())
            for (size_t i = 0; i < na; ++i) a.grad()[i] += go[i];
        if (b.requires_grad())
            for (size_t i = 0; i < b.vec().size(); ++i) b.grad()[i] += go[na + i];
    });
    return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
    if (a.ndim() != 1 || b.ndim() != 1) throw std::invalid_argument("cosine_similarity: expected vectors");
    check_same_shape(a, b, "cosine_similarity");
    if (eps <= 0.0) throw std::invalid_argument("cosine_similarity: eps must be > 0");
    const int64_t n = a.numel();
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        dot += a.data()[i] * b.data()[i];
        na2 += a.data()[i] * a.data()[i];
        nb2 += b.data()[i] * b.data()[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    Tensor out = Tensor::zeros({1}, any_requires_grad({a, b}));
    if (na < eps || nb < eps) {
        out.data()[0] = 0.0;  // degenerate vectors carry no direction; no gradient either
        return out;
    }
    double cosv;
    // Comparing squares avoids the 1-ulp wobble of sqrt(x)*sqrt(x), so
    // bitwise-equal inputs give exactly 1.
    if (dot * dot >= na2 * nb2) {
        cosv = dot > 0.0 ? 1.0 : -1.0;
    } else {
        cosv = dot / (na * nb);
    }
    out.data()[0] = cosv;
    record(out, {a, b}, [out, a, b, na, nb, cosv, n]() mutable {
        const double g = out.grad()[0];
        const double inv_ab = 1.0 / (na * nb);
        if (a.requires_grad()) {
            const double inv_a2 = 1.0 / (na * na);
            for (int64_t i = 0; i < n; ++i)
                a.grad()[static_cast<size_t>(i)] +=
                    g * (b.data()[i] * inv_ab - cosv * a.data()[i] * inv_a2);
        }
        if (b.requires_grad()) {
            const double inv_b2 = 1.0 / (nb * nb);
            for (int64_t i = 0; i < n; ++i)
                b.grad()[static_cast<size_t>(i)] +=
                    g * (a.data()[i] * inv_ab - cosv * b.data()[i] * inv_b2);
        }
    });
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    if (input.ndim() != 4 || kernel.ndim() != 4)
        throw std::invalid_argument("conv2d: expected [N,C,H,W] input and [F,C,kh,kw] kernel");
    if (input.dim(1) != kernel.dim(1))
        throw std::invalid_argument("conv2d: input channels do not match kernel channels");
    const auto d = kernels::conv_dims(input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                                      kernel.dim(0), kernel.dim(2), kernel.dim(3), stride, padding);
    Tensor out = Tensor::zeros({d.n, d.f, d.oh, d.ow}, any_requires_grad({input, kernel}));
    kernels::conv2d_forward(input.data(), kernel.data(), out.data(), d);
    record(out, {input, kernel}, [out, input, kernel, d]() mutable {
        if (input.requires_grad())
            kernels::conv2d_backward_input(out.grad().data(), kernel.data(), input.grad().data(), d);
        if (kernel.requires_grad())
            kernels::conv2d_backward_kernel(out.grad().data(), input.data(), kernel.grad().data(), d);
    });
    return out;
}

Tensor bias_add(const Tensor& a, const Tensor& bias) {
    if (a.ndim() != 4 || bias.ndim() != 1 || bias.dim(0) != a.dim(1))
        throw std::invalid_argument("bias_add: expected [N,F,H,W] and [F]");
    const int n = a.dim(0), f = a.dim(1);
    const int64_t hw = int64_t(a.dim(2)) * a.dim(3);
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({a, bias}));
    for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi) {
            const double bv = bias.data()[fi];
            const int64_t base = (int64_t(ni) * f + fi) * hw;
            for (int64_t i = 0; i < hw; ++i) out.data()[base + i] = a.data()[base + i] + bv;
        }
    record(out, {a, bias}, [out, a, bias, n, f, hw]() mutable {
        const auto& go = out.grad();
        if (a.requires_grad())
            for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
        if (bias.requires_grad())
            for (int ni = 0; ni < n; ++ni)
                for (int fi = 0; fi < f; ++fi) {
                    double acc = 0.0;
                    const int64_t base = (int64_t(ni) * f + fi) * hw;
                    for (int64_t i = 0; i < hw; ++i) acc += go[static_cast<size_t>(base + i)];
                    bias.grad()[static_cast<size_t>(fi)] += acc;
                }
    });
    return out;
}

}  // namespace alforge::ops
