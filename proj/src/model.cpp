#include "alforge/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "alforge/ops.hpp"
#include "alforge/rng.hpp"

#include <nlohmann/json.hpp>

namespace alforge {

using nlohmann::json;

namespace {

Tensor init_kernel(Rng& rng, int f, int c, int kh, int kw) {
    const int fan_in = c * kh * kw;
    const double bound = std::sqrt(1.0 / fan_in);
    Tensor t = Tensor::zeros({f, c, kh, kw});
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    return t;
}

struct LayerSpec {
    std::string name;
    int in_c, out_c, k;
};

std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
    return {
        {"enc1a", cfg.in_channels, cfg.c1, 3}, {"enc1b", cfg.c1, cfg.c1, 3},
        {"enc2a", cfg.c1, cfg.c2, 3},          {"enc2b", cfg.c2, cfg.c2, 3},
        {"enc3", cfg.c2, cfg.c3, 3},           {"dec1", cfg.c3 + cfg.c2, cfg.c2, 3},
        {"dec2", cfg.c2 + cfg.c1, cfg.c1, 3},  {"head", cfg.c1, 1, 1},
    };
}

}  // namespace

ModelParams init_params(uint64_t seed, const ModelConfig& cfg) {
    Rng rng = Rng::derive(seed, "model-init");
    ModelParams p;
    p.cfg = cfg;
    for (const auto& spec : layer_specs(cfg)) {
        p.named.emplace_back(spec.name + ".w", init_kernel(rng, spec.out_c, spec.in_c, spec.k, spec.k));
        p.named.emplace_back(spec.name + ".b", Tensor::zeros({spec.out_c}));
    }
    return p;
}

namespace {

Tensor conv_block(const ModelParams& p, const std::string& name, const Tensor& x, int stride,
                  int padding, bool relu) {
    // x is [C,H,W]; convs run batched with N=1
    Tensor x4 = ops::reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
    Tensor y = ops::conv2d(x4, p.find(name + ".w"), stride, padding);
    y = ops::bias_add(y, p.find(name + ".b"));
    Tensor y3 = ops::reshape(y, {y.dim(1), y.dim(2), y.dim(3)});
    return relu ? ops::relu(y3) : y3;
}

}  // namespace

ModelOutput forward(const ModelParams& params, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != params.cfg.in_channels)
        throw std::invalid_argument("forward: expected [in_channels,H,W] image");
    const int h = image.dim(1), w = image.dim(2);
    if (h % 4 != 0 || w % 4 != 0)
        throw std::invalid_argument("forward: image size must be divisible by 4");

    Tensor e1 = conv_block(params, "enc1a", image, 1, 1, true);  // [c1,H,W]
    Tensor p1 = conv_block(params, "enc1b", e1, 2, 1, true);     // [c1,H/2,W/2]
    Tensor e2 = conv_block(params, "enc2a", p1, 1, 1, true);     // [c2,H/2,W/2]
    Tensor p2 = conv_block(params, "enc2b", e2, 2, 1, true);     // [c2,H/4,W/4]
    Tensor feats = conv_block(params, "enc3", p2, 1, 1, true);   // [c3,H/4,W/4]

    Tensor u1 = ops::upsample_nearest2x(feats);                  // [c3,H/2,W/2]
    Tensor d1 = conv_block(params, "dec1", ops::concat_channels(u1, e2), 1, 1, true);
    Tensor u2 = ops::upsample_nearest2x(d1);                     // [c2? -> c2 at H,W]
    Tensor d2 = conv_block(params, "dec2", ops::concat_channels(u2, e1), 1, 1, true);
    Tensor logits = conv_block(params, "head", d2, 1, 0, false);  // [1,H,W]

    ModelOutput out;
    out.prediction = ops::sigmoid(ops::reshape(logits, {h, w}));
    out.features = feats;
    return out;
}

void Adam::step(ModelParams& params, const std::vector<std::vector<double>>& grads) {
    if (grads.size() != params.named.size())
        throw std::invalid_argument("Adam::step: grads count does not match parameters");
    if (m_.empty()) {
        for (const auto& [name, t] : params.named) {
            m_.emplace_back(t.vec().size(), 0.0);
            v_.emplace_back(t.vec().size(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t pi = 0; pi < params.named.size(); ++pi) {
        auto& data = params.named[pi].second.vec();
        const auto& g = grads[pi];
        if (g.size() != data.size())
            throw std::invalid_argument("Adam::step: gradient size mismatch for " + params.named[pi].first);
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < data.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void save_checkpoint(const std::string& path, const ModelParams& params, uint64_t seed,
                     int step_count) {
    json header;
    header["config"] = {{"in_channels", params.cfg.in_channels},
                        {"c1", params.cfg.c1},
                        {"c2", params.cfg.c2},
                        {"c3", params.cfg.c3}};
    header["seed"] = seed;
    header["step_count"] = step_count;
    json plist = json::array();
    for (const auto& [name, t] : params.named) plist.push_back({{"name", name}, {"shape", t.shape()}});
    header["parameters"] = plist;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write("ALFCKPT1", 8);
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : params.named)
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path, uint64_t* seed, int* step_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "ALFCKPT1", 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
    json header = json::parse(hs);

    ModelConfig cfg;
    cfg.in_channels = header["config"]["in_channels"];
    cfg.c1 = header["config"]["c1"];
    cfg.c2 = header["config"]["c2"];
    cfg.c3 = header["config"]["c3"];
    if (seed) *seed = header["seed"];
    if (step_count) *step_count = header["step_count"];

    ModelParams p;
    p.cfg = cfg;
    for (const auto& entry : header["parameters"]) {
        Shape shape = entry["shape"].get<Shape>();
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
        p.named.emplace_back(entry["name"].get<std::string>(), t);
    }
    return p;
}

}  // namespace alforge
