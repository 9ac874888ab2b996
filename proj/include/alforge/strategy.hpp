#pragma once

#include <string>
#include <vector>

#include "alforge/tensor.hpp"

namespace alforge {

// Per-class prototype vector: the encoder feature map masked by the
// class probability map (downsampled to feature resolution) and
// spatially averaged. c=1 is foreground, c=0 the complement map.
// Differentiable, so it serves both scoring and the discrepancy loss.
Tensor class_feature(const Tensor& features, const Tensor& pred, int c);

// Alternative reading that normalizes by the mask mass instead of the
// pixel count. Rescales the prototype by a positive scalar, so cosine
// based quantities are unchanged; kept for the equivalence check.
Tensor class_feature_mask_normalized(const Tensor& features, const Tensor& pred, int c);

// cos(F1, F0); in [0,1] for relu features, 0 on degenerate norms.
double uncertainty_score(const Tensor& features, const Tensor& pred);

// Spatial average of the encoder feature map.
Tensor image_feature(const Tensor& features);

// Mean pixel entropy of the probability map, 0*ln 0 := 0.
double entropy_score(const Tensor& pred);

struct SampleScore {
    int sample_id = 0;
    double uncertainty = 0.0;
    double entropy = 0.0;
    std::vector<double> image_feature;
};

struct SamplePool {
    std::vector<SampleScore> unlabeled;                 // D_U with cached scores
    std::vector<std::vector<double>> labeled_features;  // D_L features (coreset seed set)
};

struct ClusterResult {
    std::vector<int> assignments;          // per point, in [0,K)
    std::vector<std::vector<double>> centroids;
    double weighted_objective = 0.0;       // sum_k sum_{x in S_k} w(x) ||F(x)-mu_k||^2
    double paper_objective = 0.0;          // same with an extra 1/|S_k| factor per cluster
    int iterations = 0;
};

inline constexpr double kMinClusterWeight = 1e-6;

// Weighted Lloyd with weighted k-means++ init. Deterministic given
// seed. init_centroid_points, when non-empty, overrides the k-means++
// init with the given point indices (used by the exhaustive-restart
// oracle checks). objective_trace, when given, receives the weighted
// objective evaluated at the start of each Lloyd iteration.
ClusterResult weighted_kmeans(const std::vector<std::vector<double>>& points,
                              const std::vector<double>& weights, int k, uint64_t seed,
                              int max_iters = 100, double tol = 1e-6,
                              const std::vector<int>& init_centroid_points = {},
                              std::vector<double>* objective_trace = nullptr);

std::vector<int> select_batch_ours(const SamplePool& pool, int budget, uint64_t seed);

enum class Strategy { Ours, Random, Entropy, Coreset, UncertaintyTopB, PureKmeans };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

std::vector<int> select_batch(Strategy strategy, const SamplePool& pool, int budget, uint64_t seed);

// {round, strategy, selected_ids, per_sample: [{id, uncertainty, entropy}]}
std::string selection_to_json(int round, const std::string& strategy,
                              const std::vector<int>& selected_ids, const SamplePool& pool);

}  // namespace alforge
