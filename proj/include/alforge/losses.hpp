#pragma once

#include <vector>

#include "alforge/tensor.hpp"

namespace alforge {

struct LossConfig {
    double delta = 0.2;        // hinge margin of the feature discrepancy loss
    double lambda_c = 0.1;     // trade-off weight on the discrepancy term
    double dice_smooth = 1.0;
    double bce_clamp_eps = 1e-7;
};

void validate(const LossConfig& cfg);

// Mean over pixels of -[y ln p + (1-y) ln(1-p)], with p clamped to
// [eps, 1-eps].
Tensor bce_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

// 1 - (2*sum(p*y) + smooth) / (sum(p) + sum(y) + smooth), soft.
Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth = 1.0);

Tensor seg_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

// max(0, cos(F1, F0) - delta) where F1/F0 are the class-masked pooled
// features of the (downsampled) prediction map.
Tensor fdl_loss(const Tensor& features, const Tensor& pred, const LossConfig& cfg = {});

struct LabeledExample {
    Tensor pred;
    Tensor target;
};

// seg over the labeled batch (mean over samples) + lambda_c * fdl over
// the unlabeled batch. Unlabeled entries are (features, pred) pairs.
Tensor total_loss(const std::vector<LabeledExample>& labeled,
                  const std::vector<std::pair<Tensor, Tensor>>& unlabeled_feat_pred,
                  const LossConfig& cfg = {});

}  // namespace alforge
