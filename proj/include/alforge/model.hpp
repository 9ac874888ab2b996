#pragma once

#include <string>
#include <vector>

#include "alforge/tensor.hpp"

namespace alforge {

struct ModelConfig {
    int in_channels = 3;
    // encoder widths; the bottleneck width c3 is the image-feature dimension
    int c1 = 8;
    int c2 = 16;
    int c3 = 32;

    bool operator==(const ModelConfig&) const = default;
};

// Encoder: two strided stages (total downsampling 4x) plus a bottleneck
// conv. Decoder: two nearest-2x upsamples with skip connections, then a
// 1x1 sigmoid head.
struct ModelParams {
    ModelConfig cfg;
    std::vector<std::pair<std::string, Tensor>> named;  // fixed order, see checkpoint docs

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(named.size());
        for (const auto& [name, t] : named) out.push_back(t);
        return out;
    }

    Tensor find(const std::string& name) const {
        for (const auto& [n, t] : named)
            if (n == name) return t;
        throw std::invalid_argument("ModelParams: no parameter named " + name);
    }

    // Deep copy with requires_grad set on every tensor.
    ModelParams clone(bool requires_grad) const {
        ModelParams out;
        out.cfg = cfg;
        out.named.reserve(named.size());
        for (const auto& [n, t] : named) out.named.emplace_back(n, t.clone(requires_grad));
        return out;
    }

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : named) n += t.numel();
        return n;
    }
};

struct ModelOutput {
    Tensor prediction;  // [H,W] in (0,1)
    Tensor features;    // [c3, H/4, W/4]
};

ModelParams init_params(uint64_t seed, const ModelConfig& cfg = {});

ModelOutput forward(const ModelParams& params, const Tensor& image);

class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // grads[i] pairs with params.named[i]; moment state persists across calls.
    void step(ModelParams& params, const std::vector<std::vector<double>>& grads);

    int step_count() const { return t_; }
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Checkpoint: magic "ALFCKPT1", u64 LE header length, JSON header
// (config, seed, step count, parameter names/shapes), then all
// parameter data as little-endian float64 in declaration order.
void save_checkpoint(const std::string& path, const ModelParams& params, uint64_t seed, int step_count);
ModelParams load_checkpoint(const std::string& path, uint64_t* seed = nullptr, int* step_count = nullptr);

}  // namespace alforge
