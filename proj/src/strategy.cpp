#include "alforge/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "alforge/ops.hpp"
#include "alforge/rng.hpp"

namespace alforge {

namespace {

Tensor class_mask(const Tensor& pred, int c, int h, int w) {
    if (c != 0 && c != 1) throw std::invalid_argument("class_feature: class must be 0 or 1");
    Tensor y1 = (pred.dim(0) == h && pred.dim(1) == w) ? pred : ops::downsample_avg(pred, h, w);
    return c == 1 ? y1 : ops::affine(y1, -1.0, 1.0);
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

Tensor class_feature(const Tensor& features, const Tensor& pred, int c) {
    if (features.ndim() != 3) throw std::invalid_argument("class_feature: expected [C,h,w] features");
    if (pred.ndim() != 2) throw std::invalid_argument("class_feature: expected [H,W] prediction");
    Tensor mask = class_mask(pred, c, features.dim(1), features.dim(2));
    return ops::masked_channel_mean(features, mask);
}

Tensor class_feature_mask_normalized(const Tensor& features, const Tensor& pred, int c) {
    Tensor mask = class_mask(pred, c, features.dim(1), features.dim(2));
    double mass = 0.0;
    for (double v : mask.vec()) mass += v;
    Tensor plain = ops::masked_channel_mean(features, mask);
    const double hw = static_cast<double>(features.dim(1)) * features.dim(2);
    if (mass <= 0.0) return plain;  // zero-mass mask: both readings are the zero vector
    return ops::affine(plain, hw / mass, 0.0);
}

double uncertainty_score(const Tensor& features, const Tensor& pred) {
    Tensor f1 = class_feature(features, pred, 1);
    Tensor f0 = class_feature(features, pred, 0);
    return ops::cosine_similarity(f1, f0).item();
}

Tensor image_feature(const Tensor& features) { return ops::spatial_mean(features); }

double entropy_score(const Tensor& pred) {
    double acc = 0.0;
    for (double p : pred.vec()) {
        if (p > 0.0) acc -= p * std::log(p);
        const double q = 1.0 - p;
        if (q > 0.0) acc -= q * std::log(q);
    }
    return acc / static_cast<double>(pred.numel());
}

namespace {

std::vector<int> assign_points(const std::vector<std::vector<double>>& points,
                               const std::vector<std::vector<double>>& centroids) {
    std::vector<int> assign(points.size(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < centroids.size(); ++k) {
            const double d = sqdist(points[i], centroids[k]);
            if (d < best) {
                best = d;
                assign[i] = static_cast<int>(k);
            }
        }
    }
    return assign;
}

// Sample an index with probability proportional to mass[i].
int sample_proportional(Rng& rng, const std::vector<double>& mass) {
    double total = 0.0;
    for (double m : mass) total += m;
    const double r = rng.uniform() * total;
    double cum = 0.0;
    for (size_t i = 0; i < mass.size(); ++i) {
        cum += mass[i];
        if (cum > r) return static_cast<int>(i);
    }
    // numerical tail: last index with positive mass
    for (size_t i = mass.size(); i-- > 0;)
        if (mass[i] > 0.0) return static_cast<int>(i);
    return 0;
}

std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& points,
                                               const std::vector<double>& weights, int k, Rng& rng) {
    std::vector<std::vector<double>> centroids;
    centroids.push_back(points[static_cast<size_t>(sample_proportional(rng, weights))]);
    std::vector<double> d2(points.size());
    while (static_cast<int>(centroids.size()) < k) {
        std::vector<double> mass(points.size());
        for (size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sqdist(points[i], c));
            mass[i] = weights[i] * best;
        }
        centroids.push_back(points[static_cast<size_t>(sample_proportional(rng, mass))]);
    }
    return centroids;
}

}  // namespace

ClusterResult weighted_kmeans(const std::vector<std::vector<double>>& points,
                              const std::vector<double>& weights, int k, uint64_t seed,
                              int max_iters, double tol,
                              const std::vector<int>& init_centroid_points,
                              std::vector<double>* objective_trace) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("weighted_kmeans: K must be >= 1");
    if (k > n) throw std::invalid_argument("weighted_kmeans: K exceeds number of points");
    if (weights.size() != points.size())
        throw std::invalid_argument("weighted_kmeans: weights/points size mismatch");

    std::vector<double> w(weights);
    for (double& wi : w) wi = std::max(wi, kMinClusterWeight);

    std::vector<std::vector<double>> centroids;
    if (!init_centroid_points.empty()) {
        if (static_cast<int>(init_centroid_points.size()) != k)
            throw std::invalid_argument("weighted_kmeans: init centroid count != K");
        for (int idx : init_centroid_points) centroids.push_back(points[static_cast<size_t>(idx)]);
    } else {
        Rng rng = Rng::derive(seed, "kmeans-init");
        centroids = kmeanspp_init(points, w, k, rng);
    }

    ClusterResult res;
    res.centroids = centroids;
    const size_t dim = points[0].size();

    for (int iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        res.assignments = assign_points(points, res.centroids);

        // Empty-cluster repair: promote the point with the largest
        // weighted distance (from a cluster that can spare it).
        for (int k0 = 0; k0 < k; ++k0) {
            std::vector<int> counts(static_cast<size_t>(k), 0);
            for (int a : res.assignments) ++counts[static_cast<size_t>(a)];
            if (counts[static_cast<size_t>(k0)] > 0) continue;
            int best_i = -1;
            double best_cost = -1.0;
            for (int i = 0; i < n; ++i) {
                if (counts[static_cast<size_t>(res.assignments[static_cast<size_t>(i)])] < 2) continue;
                const double cost =
                    w[static_cast<size_t>(i)] *
                    sqdist(points[static_cast<size_t>(i)], res.centroids[static_cast<size_t>(res.assignments[static_cast<size_t>(i)])]);
                if (cost > best_cost) {
                    best_cost = cost;
                    best_i = i;
                }
            }
            if (best_i >= 0) {
                res.centroids[static_cast<size_t>(k0)] = points[static_cast<size_t>(best_i)];
                res.assignments[static_cast<size_t>(best_i)] = k0;
            }
        }

        if (objective_trace) {
            double obj = 0.0;
            for (int i = 0; i < n; ++i)
                obj += w[static_cast<size_t>(i)] *
                       sqdist(points[static_cast<size_t>(i)],
                              res.centroids[static_cast<size_t>(res.assignments[static_cast<size_t>(i)])]);
            objective_trace->push_back(obj);
        }

        // Weighted centroid update.
        std::vector<std::vector<double>> next(static_cast<size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<double> wsum(static_cast<size_t>(k), 0.0);
        for (int i = 0; i < n; ++i) {
            const int a = res.assignments[static_cast<size_t>(i)];
            wsum[static_cast<size_t>(a)] += w[static_cast<size_t>(i)];
            for (size_t j = 0; j < dim; ++j)
                next[static_cast<size_t>(a)][j] += w[static_cast<size_t>(i)] * points[static_cast<size_t>(i)][j];
        }
        double max_shift = 0.0;
        for (int k0 = 0; k0 < k; ++k0) {
            if (wsum[static_cast<size_t>(k0)] > 0.0)
                for (size_t j = 0; j < dim; ++j) next[static_cast<size_t>(k0)][j] /= wsum[static_cast<size_t>(k0)];
            max_shift = std::max(max_shift, std::sqrt(sqdist(next[static_cast<size_t>(k0)],
                                                             res.centroids[static_cast<size_t>(k0)])));
            res.centroids[static_cast<size_t>(k0)] = std::move(next[static_cast<size_t>(k0)]);
        }
        if (max_shift < tol) break;
    }

    res.assignments = assign_points(points, res.centroids);
    res.weighted_objective = 0.0;
    std::vector<double> per_cluster(static_cast<size_t>(k), 0.0);
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
        const int a = res.assignments[static_cast<size_t>(i)];
        const double c = w[static_cast<size_t>(i)] * sqdist(points[static_cast<size_t>(i)], res.centroids[static_cast<size_t>(a)]);
        res.weighted_objective += c;
        per_cluster[static_cast<size_t>(a)] += c;
        ++counts[static_cast<size_t>(a)];
    }
    res.paper_objective = 0.0;
    for (int k0 = 0; k0 < k; ++k0)
        if (counts[static_cast<size_t>(k0)] > 0)
            res.paper_objective += per_cluster[static_cast<size_t>(k0)] / counts[static_cast<size_t>(k0)];
    return res;
}

namespace {

std::vector<SampleScore> sorted_pool(const SamplePool& pool) {
    std::vector<SampleScore> s = pool.unlabeled;
    std::sort(s.begin(), s.end(),
              [](const SampleScore& a, const SampleScore& b) { return a.sample_id < b.sample_id; });
    return s;
}

std::vector<int> all_ids(const std::vector<SampleScore>& s) {
    std::vector<int> ids;
    ids.reserve(s.size());
    for (const auto& x : s) ids.push_back(x.sample_id);
    return ids;
}

std::vector<int> centroid_nearest(const std::vector<SampleScore>& s, const ClusterResult& clu,
                                  int k) {
    std::vector<int> out;
    for (int k0 = 0; k0 < k; ++k0) {
        int best_id = -1;
        double best = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < s.size(); ++i) {
            if (clu.assignments[i] != k0) continue;
            const double d = sqdist(s[i].image_feature, clu.centroids[static_cast<size_t>(k0)]);
            if (d < best || (d == best && s[i].sample_id < best_id)) {
                best = d;
                best_id = s[i].sample_id;
            }
        }
        if (best_id >= 0) out.push_back(best_id);
    }
    return out;
}

std::vector<int> select_kmeans(const std::vector<SampleScore>& s, int budget, uint64_t seed,
                               bool weighted) {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
    for (const auto& x : s) {
        points.push_back(x.image_feature);
        weights.push_back(weighted ? std::max(x.uncertainty, kMinClusterWeight) : 1.0);
    }
    ClusterResult clu = weighted_kmeans(points, weights, budget, seed);
    std::vector<int> out = centroid_nearest(s, clu, budget);
    // Degenerate pools (e.g. identical features) can leave clusters empty
    // even after repair; top up by weight, then lowest id, so the batch
    // always has exactly `budget` members.
    if (static_cast<int>(out.size()) < budget) {
        std::set<int> chosen(out.begin(), out.end());
        std::vector<size_t> order(s.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (weights[a] != weights[b]) return weights[a] > weights[b];
            return s[a].sample_id < s[b].sample_id;
        });
        for (size_t i : order) {
            if (static_cast<int>(out.size()) >= budget) break;
            if (chosen.insert(s[i].sample_id).second) out.push_back(s[i].sample_id);
        }
    }
    return out;
}

std::vector<int> select_coreset(const std::vector<SampleScore>& s,
                                const std::vector<std::vector<double>>& labeled_features,
                                int budget) {
    // k-center greedy, farthest-first from the labeled set.
    std::vector<double> min_d(s.size(), std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < s.size(); ++i)
        for (const auto& lf : labeled_features)
            min_d[i] = std::min(min_d[i], sqdist(s[i].image_feature, lf));
    std::vector<bool> taken(s.size(), false);
    std::vector<int> out;
    for (int b = 0; b < budget; ++b) {
        int best_i = -1;
        for (size_t i = 0; i < s.size(); ++i) {
            if (taken[i]) continue;
            if (best_i < 0 || min_d[i] > min_d[static_cast<size_t>(best_i)]) best_i = static_cast<int>(i);
        }
        taken[static_cast<size_t>(best_i)] = true;
        out.push_back(s[static_cast<size_t>(best_i)].sample_id);
        for (size_t i = 0; i < s.size(); ++i)
            if (!taken[i])
                min_d[i] = std::min(min_d[i], sqdist(s[i].image_feature,
                                                     s[static_cast<size_t>(best_i)].image_feature));
    }
    return out;
}

std::vector<int> select_top_by(const std::vector<SampleScore>& s, int budget,
                               double SampleScore::*field) {
    std::vector<size_t> order(s.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (s[a].*field != s[b].*field) return s[a].*field > s[b].*field;
        return s[a].sample_id < s[b].sample_id;
    });
    std::vector<int> out;
    for (int b = 0; b < budget; ++b) out.push_back(s[order[static_cast<size_t>(b)]].sample_id);
    return out;
}

}  // namespace

std::vector<int> select_batch_ours(const SamplePool& pool, int budget, uint64_t seed) {
    return select_batch(Strategy::Ours, pool, budget, seed);
}

Strategy parse_strategy(const std::string& name) {
    if (name == "ours") return Strategy::Ours;
    if (name == "random") return Strategy::Random;
    if (name == "entropy") return Strategy::Entropy;
    if (name == "coreset") return Strategy::Coreset;
    if (name == "uncertainty_topB") return Strategy::UncertaintyTopB;
    if (name == "pure_kmeans") return Strategy::PureKmeans;
    throw std::invalid_argument("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Ours: return "ours";
        case Strategy::Random: return "random";
        case Strategy::Entropy: return "entropy";
        case Strategy::Coreset: return "coreset";
        case Strategy::UncertaintyTopB: return "uncertainty_topB";
        case Strategy::PureKmeans: return "pure_kmeans";
    }
    throw std::invalid_argument("unknown strategy enum");
}

std::vector<int> select_batch(Strategy strategy, const SamplePool& pool, int budget, uint64_t seed) {
    if (budget < 1) throw std::invalid_argument("select_batch: budget must be >= 1");
    if (pool.unlabeled.empty()) throw std::invalid_argument("select_batch: empty pool");
    // Canonical id order makes every strategy independent of pool ordering.
    std::vector<SampleScore> s = sorted_pool(pool);
    if (budget >= static_cast<int>(s.size())) return all_ids(s);

    switch (strategy) {
        case Strategy::Ours:
            return select_kmeans(s, budget, seed, /*weighted=*/true);
        case Strategy::PureKmeans:
            return select_kmeans(s, budget, seed, /*weighted=*/false);
        case Strategy::Random: {
            Rng rng = Rng::derive(seed, "select-random");
            std::vector<int> ids = all_ids(s);
            for (int b = 0; b < budget; ++b) {
                const size_t j = static_cast<size_t>(b) + rng.below(ids.size() - static_cast<size_t>(b));
                std::swap(ids[static_cast<size_t>(b)], ids[j]);
            }
            ids.resize(static_cast<size_t>(budget));
            return ids;
        }
        case Strategy::Entropy:
            return select_top_by(s, budget, &SampleScore::entropy);
        case Strategy::UncertaintyTopB:
            return select_top_by(s, budget, &SampleScore::uncertainty);
        case Strategy::Coreset:
            return select_coreset(s, pool.labeled_features, budget);
    }
    throw std::invalid_argument("unknown strategy enum");
}

std::string selection_to_json(int round, const std::string& strategy,
                              const std::vector<int>& selected_ids, const SamplePool& pool) {
    nlohmann::json j;
    j["round"] = round;
    j["strategy"] = strategy;
    j["selected_ids"] = selected_ids;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : sorted_pool(pool))
        per.push_back({{"id", s.sample_id}, {"uncertainty", s.uncertainty}, {"entropy", s.entropy}});
    j["per_sample"] = per;
    return j.dump(2);
}

}  // namespace alforge
