#include "alforge/losses.hpp"

#include "alforge/ops.hpp"
#include "alforge/strategy.hpp"

namespace alforge {

void validate(const LossConfig& cfg) {
    if (cfg.delta < 0.0 || cfg.delta >= 1.0) throw std::invalid_argument("LossConfig: delta must be in [0,1)");
    if (cfg.lambda_c < 0.0) throw std::invalid_argument("LossConfig: lambda_c must be >= 0");
    if (cfg.dice_smooth <= 0.0) throw std::invalid_argument("LossConfig: dice_smooth must be > 0");
    if (cfg.bce_clamp_eps <= 0.0 || cfg.bce_clamp_eps >= 0.5)
        throw std::invalid_argument("LossConfig: bce_clamp_eps must be in (0, 0.5)");
}

Tensor bce_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
    check_same_shape(pred, target, "bce_loss");
    Tensor p = ops::clamp(pred, cfg.bce_clamp_eps, 1.0 - cfg.bce_clamp_eps);
    Tensor pos = ops::mul(target, ops::log(p));
    Tensor neg = ops::mul(ops::affine(target, -1.0, 1.0), ops::log(ops::affine(p, -1.0, 1.0)));
    return ops::affine(ops::mean(ops::add(pos, neg)), -1.0, 0.0);
}

Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth) {
    check_same_shape(pred, target, "dice_loss");
    if (smooth <= 0.0) throw std::invalid_argument("dice_loss: smooth must be > 0");
    Tensor inter = ops::sum(ops::mul(pred, target));
    Tensor num = ops::affine(inter, 2.0, smooth);
    Tensor den = ops::affine(ops::add(ops::sum(pred), ops::sum(target)), 1.0, smooth);
    return ops::affine(ops::div(num, den), -1.0, 1.0);
}

Tensor seg_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
    return ops::add(bce_loss(pred, target, cfg), dice_loss(pred, target, cfg.dice_smooth));
}

Tensor fdl_loss(const Tensor& features, const Tensor& pred, const LossConfig& cfg) {
    Tensor f1 = class_feature(features, pred, 1);
    Tensor f0 = class_feature(features, pred, 0);
    Tensor cos = ops::cosine_similarity(f1, f0);
    return ops::relu(ops::affine(cos, 1.0, -cfg.delta));
}

Tensor total_loss(const std::vector<LabeledExample>& labeled,
                  const std::vector<std::pair<Tensor, Tensor>>& unlabeled_feat_pred,
                  const LossConfig& cfg) {
    if (labeled.empty()) throw std::invalid_argument("total_loss: empty labeled batch");
    Tensor seg_sum;
    for (const auto& ex : labeled) {
        Tensor l = seg_loss(ex.pred, ex.target, cfg);
        seg_sum = seg_sum.defined() ? ops::add(seg_sum, l) : l;
    }
    Tensor total = ops::affine(seg_sum, 1.0 / static_cast<double>(labeled.size()), 0.0);
    if (cfg.lambda_c > 0.0 && !unlabeled_feat_pred.empty()) {
        Tensor fdl_sum;
        for (const auto& [feats, pred] : unlabeled_feat_pred) {
            Tensor l = fdl_loss(feats, pred, cfg);
            fdl_sum = fdl_sum.defined() ? ops::add(fdl_sum, l) : l;
        }
        Tensor fdl = ops::affine(fdl_sum, cfg.lambda_c / static_cast<double>(unlabeled_feat_pred.size()), 0.0);
        total = ops::add(total, fdl);
    }
    return total;
}

}  // namespace alforge
