#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "alforge/ops.hpp"
#include "alforge/rng.hpp"
#include "alforge/strategy.hpp"

using namespace alforge;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// Exhaustive optimum of the weighted k-means objective: enumerate every
// assignment of n points to k labels and use the weighted mean of each
// cluster as its centroid.
double brute_force_objective(const std::vector<std::vector<double>>& points,
                             const std::vector<double>& weights, int k) {
    const int n = static_cast<int>(points.size());
    const size_t dim = points[0].size();
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> assign(static_cast<size_t>(n), 0);
    const int64_t total = static_cast<int64_t>(std::pow(k, n));
    for (int64_t code = 0; code < total; ++code) {
        int64_t c = code;
        for (int i = 0; i < n; ++i) {
            assign[static_cast<size_t>(i)] = static_cast<int>(c % k);
            c /= k;
        }
        std::vector<std::vector<double>> mu(static_cast<size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<double> wsum(static_cast<size_t>(k), 0.0);
        for (int i = 0; i < n; ++i) {
            wsum[assign[i]] += weights[static_cast<size_t>(i)];
            for (size_t j = 0; j < dim; ++j) mu[assign[i]][j] += weights[static_cast<size_t>(i)] * points[static_cast<size_t>(i)][j];
        }
        for (int k0 = 0; k0 < k; ++k0)
            if (wsum[static_cast<size_t>(k0)] > 0.0)
                for (size_t j = 0; j < dim; ++j) mu[static_cast<size_t>(k0)][j] /= wsum[static_cast<size_t>(k0)];
        double obj = 0.0;
        for (int i = 0; i < n; ++i) {
            double d2 = 0.0;
            for (size_t j = 0; j < dim; ++j) {
                const double d = points[static_cast<size_t>(i)][j] - mu[assign[i]][j];
                d2 += d * d;
            }
            obj += weights[static_cast<size_t>(i)] * d2;
        }
        best = std::min(best, obj);
    }
    return best;
}

// Restart Lloyd from every k-subset of points and keep the best result.
ClusterResult exhaustive_kmeans(const std::vector<std::vector<double>>& points,
                                const std::vector<double>& weights, int k) {
    const int n = static_cast<int>(points.size());
    ClusterResult best;
    best.weighted_objective = std::numeric_limits<double>::infinity();
    std::vector<int> idx(static_cast<size_t>(k));
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == k) {
            ClusterResult r = weighted_kmeans(points, weights, k, 0, 100, 1e-10, idx);
            if (r.weighted_objective < best.weighted_objective) best = r;
            return;
        }
        for (int i = start; i < n; ++i) {
            idx[static_cast<size_t>(depth)] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

SampleScore make_score(int id, double unc, double ent, std::vector<double> feat) {
    SampleScore s;
    s.sample_id = id;
    s.uncertainty = unc;
    s.entropy = ent;
    s.image_feature = std::move(feat);
    return s;
}

}  // namespace

TEST_CASE("class_feature closed forms") {
    // Two channels at 2x2; F_c = mean over pixels of mask * feature.
    Tensor features = Tensor::from_data({2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    Tensor pred = Tensor::from_data({2, 2}, {1, 0, 0.5, 0});
    Tensor f1 = class_feature(features, pred, 1);
    CHECK(f1.data()[0] == doctest::Approx((1 * 1 + 0 + 1.5 + 0) / 4.0).epsilon(1e-15));
    CHECK(f1.data()[1] == doctest::Approx((10 + 0 + 15 + 0) / 4.0).epsilon(1e-15));
    Tensor f0 = class_feature(features, pred, 0);
    CHECK(f0.data()[0] == doctest::Approx((0 + 2 + 1.5 + 4) / 4.0).epsilon(1e-15));
    CHECK(f0.data()[1] == doctest::Approx((0 + 20 + 15 + 40) / 4.0).epsilon(1e-15));
    CHECK_THROWS_AS(class_feature(features, pred, 2), std::invalid_argument);
}

TEST_CASE("class_feature downsamples the prediction to feature resolution") {
    Rng rng(1);
    Tensor features = random_tensor({3, 2, 2}, rng);
    Tensor pred = random_tensor({4, 4}, rng);
    Tensor down = ops::downsample_avg(pred, 2, 2);
    for (int c : {0, 1})
        CHECK(class_feature(features, pred, c).vec() == class_feature(features, down, c).vec());
}

TEST_CASE("mask-normalized prototypes agree on cosine quantities") {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor features = random_tensor({6, 3, 3}, rng, 0.0, 2.0);
        Tensor pred = random_tensor({3, 3}, rng, 0.05, 0.95);
        Tensor a1 = class_feature(features, pred, 1), a0 = class_feature(features, pred, 0);
        Tensor b1 = class_feature_mask_normalized(features, pred, 1);
        Tensor b0 = class_feature_mask_normalized(features, pred, 0);
        const double ca = ops::cosine_similarity(a1, a0).item();
        const double cb = ops::cosine_similarity(b1, b0).item();
        CHECK(std::abs(ca - cb) < 1e-9);
    }
}

TEST_CASE("uncertainty is exactly 1 on a uniform 0.5 prediction") {
    Rng rng(3);
    Tensor features = random_tensor({8, 4, 4}, rng, 0.0, 1.0);
    Tensor pred = Tensor::from_data({4, 4}, std::vector<double>(16, 0.5));
    CHECK(uncertainty_score(features, pred) == 1.0);
}

TEST_CASE("uncertainty is 0 for orthogonal prototypes and bounded otherwise") {
    Tensor pred = Tensor::from_data({2, 2}, {1, 1, 0, 0});
    Tensor features = Tensor::from_data({2, 2, 2}, {1, 1, 0, 0, 0, 0, 1, 1});
    CHECK(uncertainty_score(features, pred) == 0.0);

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor f = random_tensor({5, 3, 3}, rng, 0.0, 2.0);
        Tensor p = random_tensor({3, 3}, rng, 0.0, 1.0);
        const double u = uncertainty_score(f, p);
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("image_feature is the per-channel spatial mean") {
    Tensor features = Tensor::from_data({2, 2, 2}, {1, 2, 3, 4, 5, 5, 5, 5});
    Tensor f = image_feature(features);
    CHECK(f.vec() == std::vector<double>{2.5, 5.0});
}

TEST_CASE("entropy score closed forms") {
    Tensor half = Tensor::from_data({2, 2}, std::vector<double>(4, 0.5));
    CHECK(entropy_score(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Tensor hard = Tensor::from_data({2, 2}, {0, 1, 0, 1});
    CHECK(entropy_score(hard) == 0.0);
    Tensor one = Tensor::from_data({1}, {0.25});
    CHECK(entropy_score(one) ==
          doctest::Approx(-0.25 * std::log(0.25) - 0.75 * std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("kmeans with K = n puts every point in its own cluster") {
    std::vector<std::vector<double>> pts{{0, 0}, {1, 0}, {5, 5}, {9, 1}};
    std::vector<double> w{1, 2, 3, 4};
    ClusterResult r = weighted_kmeans(pts, w, 4, 0);
    std::set<int> clusters(r.assignments.begin(), r.assignments.end());
    CHECK(clusters.size() == 4);
    CHECK(r.weighted_objective == doctest::Approx(0.0));
}

TEST_CASE("kmeans recovers two obvious 1-D groups") {
    std::vector<std::vector<double>> pts{{0.0}, {0.1}, {0.2}, {10.0}, {10.1}, {10.2}};
    std::vector<double> w(6, 1.0);
    ClusterResult r = weighted_kmeans(pts, w, 2, 7);
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[1] == r.assignments[2]);
    CHECK(r.assignments[3] == r.assignments[4]);
    CHECK(r.assignments[4] == r.assignments[5]);
    CHECK(r.assignments[0] != r.assignments[3]);
    CHECK(r.weighted_objective == doctest::Approx(0.04).epsilon(1e-9));
    std::vector<double> cs{r.centroids[0][0], r.centroids[1][0]};
    std::sort(cs.begin(), cs.end());
    CHECK(cs[0] == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(cs[1] == doctest::Approx(10.1).epsilon(1e-9));
}

TEST_CASE("weights skew the centroid toward heavy points") {
    std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    ClusterResult r = weighted_kmeans(pts, {1.0, 3.0}, 1, 0);
    CHECK(r.centroids[0][0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.weighted_objective == doctest::Approx(1.0 * 0.5625 + 3.0 * 0.0625).epsilon(1e-12));
}

TEST_CASE("exhaustive-restart Lloyd matches the brute-force optimum") {
    Rng rng(11);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(3));  // 5..7
        const int k = 2 + static_cast<int>(rng.below(2));  // 2..3
        std::vector<std::vector<double>> pts;
        std::vector<double> w;
        for (int i = 0; i < n; ++i) {
            pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
            w.push_back(rng.uniform(0.05, 1.0));
        }
        ClusterResult best = exhaustive_kmeans(pts, w, k);
        const double opt = brute_force_objective(pts, w, k);
        CHECK(best.weighted_objective == doctest::Approx(opt).epsilon(1e-7));
    }
}

TEST_CASE("Lloyd never increases the objective relative to its init") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> pts;
        std::vector<double> w;
        for (int i = 0; i < 9; ++i) {
            pts.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
            w.push_back(rng.uniform(0.01, 1.0));
        }
        const std::vector<int> init{0, 3, 6};
        // Objective of the initial centroids under nearest assignment.
        double init_obj = 0.0;
        for (size_t i = 0; i < pts.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int ci : init) {
                double d2 = 0.0;
                for (size_t j = 0; j < 3; ++j) {
                    const double d = pts[i][j] - pts[static_cast<size_t>(ci)][j];
                    d2 += d * d;
                }
                best = std::min(best, d2);
            }
            init_obj += w[i] * best;
        }
        ClusterResult r = weighted_kmeans(pts, w, 3, 0, 100, 1e-10, init);
        CHECK(r.weighted_objective <= init_obj + 1e-12);
        CHECK(r.paper_objective <= r.weighted_objective + 1e-12);
    }
}

TEST_CASE("kmeans argument validation") {
    std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    CHECK_THROWS_AS(weighted_kmeans(pts, {1, 1}, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(weighted_kmeans(pts, {1, 1}, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(weighted_kmeans(pts, {1}, 2, 0), std::invalid_argument);
}

TEST_CASE("select_batch common behavior") {
    SamplePool pool;
    pool.unlabeled = {make_score(4, 0.9, 0.5, {0, 0}), make_score(1, 0.2, 0.1, {1, 1}),
                      make_score(9, 0.5, 0.9, {2, 2})};
    for (const char* name : {"ours", "random", "entropy", "coreset", "uncertainty_topB", "pure_kmeans"}) {
        // Budget covering the pool returns every id in ascending order.
        CHECK(select_batch(parse_strategy(name), pool, 3, 0) == std::vector<int>{1, 4, 9});
        CHECK(select_batch(parse_strategy(name), pool, 10, 0) == std::vector<int>{1, 4, 9});
        // Sub-budget selections are distinct ids drawn from the pool.
        auto sel = select_batch(parse_strategy(name), pool, 2, 5);
        CHECK(sel.size() == 2);
        std::set<int> uniq(sel.begin(), sel.end());
        CHECK(uniq.size() == 2);
        for (int id : sel) CHECK((id == 1 || id == 4 || id == 9));
    }
    CHECK_THROWS_AS(select_batch(Strategy::Ours, pool, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(select_batch(Strategy::Ours, SamplePool{}, 1, 0), std::invalid_argument);
}

TEST_CASE("top-B strategies order by score with id tie-break") {
    SamplePool pool;
    pool.unlabeled = {make_score(3, 0.5, 0.2, {0}), make_score(1, 0.9, 0.2, {0}),
                      make_score(2, 0.9, 0.7, {0}), make_score(0, 0.1, 0.7, {0})};
    CHECK(select_batch(Strategy::UncertaintyTopB, pool, 3, 0) == std::vector<int>{1, 2, 3});
    CHECK(select_batch(Strategy::Entropy, pool, 3, 0) == std::vector<int>{0, 2, 1});
}

TEST_CASE("coreset follows the farthest-first trace") {
    SamplePool pool;
    pool.unlabeled = {make_score(0, 0, 0, {0.0}), make_score(1, 0, 0, {4.0}),
                      make_score(2, 0, 0, {9.0}), make_score(3, 0, 0, {10.0})};
    pool.labeled_features = {{0.0}};
    // Distances to {0}: 0,16,81,100 -> pick 3; then to {0,10}: 0,16,1 -> pick 1;
    // then to {0,4,10}: 0,..,1 -> pick 2.
    CHECK(select_batch(Strategy::Coreset, pool, 3, 0) == std::vector<int>{3, 1, 2});
}

TEST_CASE("random selection is deterministic per seed and varies across seeds") {
    SamplePool pool;
    for (int i = 0; i < 40; ++i) pool.unlabeled.push_back(make_score(i, 0, 0, {double(i)}));
    auto a = select_batch(Strategy::Random, pool, 10, 1);
    auto b = select_batch(Strategy::Random, pool, 10, 1);
    CHECK(a == b);
    bool any_differs = false;
    for (uint64_t s = 2; s < 6 && !any_differs; ++s)
        any_differs = select_batch(Strategy::Random, pool, 10, s) != a;
    CHECK(any_differs);
}

TEST_CASE("ours picks one representative per well-separated group") {
    SamplePool pool;
    // Group A near (0,0), group B near (50,50); within each group the
    // weighted centroid is pulled toward the high-uncertainty member.
    pool.unlabeled = {make_score(10, 0.9, 0, {0.0, 0.0}), make_score(11, 0.1, 0, {1.0, 0.0}),
                      make_score(20, 0.8, 0, {50.0, 50.0}), make_score(21, 0.1, 0, {51.0, 50.0})};
    auto sel = select_batch_ours(pool, 2, 3);
    std::sort(sel.begin(), sel.end());
    CHECK(sel == std::vector<int>{10, 20});
}

TEST_CASE("uniform unit uncertainty reduces ours to plain kmeans") {
    // With every weight equal to 1 the two strategies follow identical
    // arithmetic. (A shared non-unit weight is only equivalent up to
    // floating-point rounding in the proportional init sampler.)
    Rng rng(17);
    SamplePool pool;
    for (int i = 0; i < 25; ++i)
        pool.unlabeled.push_back(make_score(i, 1.0, 0, {rng.uniform(-1, 1), rng.uniform(-1, 1)}));
    for (uint64_t seed : {0ull, 1ull, 2ull})
        CHECK(select_batch(Strategy::Ours, pool, 5, seed) ==
              select_batch(Strategy::PureKmeans, pool, 5, seed));
}

TEST_CASE("selection is invariant to pool ordering") {
    Rng rng(19);
    SamplePool pool;
    for (int i = 0; i < 30; ++i)
        pool.unlabeled.push_back(
            make_score(i, rng.uniform(0, 1), rng.uniform(0, 1), {rng.uniform(-1, 1), rng.uniform(-1, 1)}));
    pool.labeled_features = {{0.0, 0.0}, {0.5, 0.5}};
    SamplePool shuffled = pool;
    std::reverse(shuffled.unlabeled.begin(), shuffled.unlabeled.end());
    std::swap(shuffled.unlabeled[3], shuffled.unlabeled[11]);
    for (const char* name : {"ours", "random", "entropy", "coreset", "uncertainty_topB", "pure_kmeans"}) {
        const Strategy st = parse_strategy(name);
        CHECK(select_batch(st, pool, 6, 5) == select_batch(st, shuffled, 6, 5));
    }
}

TEST_CASE("strategy names round-trip and bad names throw") {
    for (Strategy s : {Strategy::Ours, Strategy::Random, Strategy::Entropy, Strategy::Coreset,
                       Strategy::UncertaintyTopB, Strategy::PureKmeans})
        CHECK(parse_strategy(strategy_name(s)) == s);
    CHECK_THROWS_AS(parse_strategy("margin"), std::invalid_argument);
}

TEST_CASE("selection_to_json lists per-sample scores in id order") {
    SamplePool pool;
    pool.unlabeled = {make_score(5, 0.5, 0.25, {0}), make_score(2, 0.75, 0.5, {1})};
    const std::string j = selection_to_json(3, "ours", {2}, pool);
    CHECK(j.find("\"round\": 3") != std::string::npos);
    CHECK(j.find("\"strategy\": \"ours\"") != std::string::npos);
    const size_t first = j.find("\"id\": 2");
    const size_t second = j.find("\"id\": 5");
    REQUIRE(first != std::string::npos);
    REQUIRE(second != std::string::npos);
    CHECK(first < second);
}
