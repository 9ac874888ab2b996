#include <doctest.h>

#include <cmath>

#include "alforge/grad_check.hpp"
#include "alforge/losses.hpp"
#include "alforge/ops.hpp"
#include "alforge/rng.hpp"
#include "alforge/strategy.hpp"

using namespace alforge;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double lo = 0.0,
                     double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// Independent scalar oracle for the hinge discrepancy loss at equal
// prediction/feature resolution.
double fdl_oracle(const Tensor& features, const Tensor& pred, double delta) {
    const int c = features.dim(0), hw = features.dim(1) * features.dim(2);
    std::vector<double> f1(c, 0.0), f0(c, 0.0);
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < hw; ++i) {
            f1[ci] += features.data()[ci * hw + i] * pred.data()[i] / hw;
            f0[ci] += features.data()[ci * hw + i] * (1.0 - pred.data()[i]) / hw;
        }
    double dot = 0.0, n1 = 0.0, n0 = 0.0;
    for (int ci = 0; ci < c; ++ci) {
        dot += f1[ci] * f0[ci];
        n1 += f1[ci] * f1[ci];
        n0 += f0[ci] * f0[ci];
    }
    if (n1 < 1e-24 || n0 < 1e-24) return std::max(0.0, -delta);
    double cosv = dot / (std::sqrt(n1) * std::sqrt(n0));
    if (dot * dot >= n1 * n0) cosv = dot > 0 ? 1.0 : -1.0;
    return std::max(0.0, cosv - delta);
}

}  // namespace

TEST_CASE("bce closed forms") {
    Tensor half = Tensor::from_data({2, 2}, {0.5, 0.5, 0.5, 0.5});
    Tensor y = Tensor::from_data({2, 2}, {1, 0, 1, 0});
    CHECK(bce_loss(half, y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // Mixed confident/uncertain pixels, summed by hand.
    Tensor p = Tensor::from_data({3}, {0.9, 0.2, 0.5});
    Tensor t = Tensor::from_data({3}, {1.0, 0.0, 1.0});
    const double expect = -(std::log(0.9) + std::log(0.8) + std::log(0.5)) / 3.0;
    CHECK(bce_loss(p, t).item() == doctest::Approx(expect).epsilon(1e-12));

    // Saturated predictions stay finite through the clamp.
    Tensor sat = Tensor::from_data({2}, {0.0, 1.0});
    Tensor ty = Tensor::from_data({2}, {1.0, 0.0});
    const double worst = bce_loss(sat, ty).item();
    CHECK(std::isfinite(worst));
    CHECK(worst == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
}

TEST_CASE("dice closed forms") {
    // Perfect binary agreement is exactly 0 thanks to the shared smooth term.
    Tensor y = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    CHECK(dice_loss(y, y).item() == 0.0);

    // Disjoint: 1 - smooth / (|p| + |y| + smooth).
    Tensor p = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    Tensor t = Tensor::from_data({2, 2}, {0, 1, 0, 0});
    CHECK(dice_loss(p, t).item() == doctest::Approx(1.0 - 1.0 / 3.0).epsilon(1e-12));

    // Soft prediction, computed by hand: p = 0.5 everywhere, y has 2 of 4.
    Tensor half = Tensor::from_data({2, 2}, {0.5, 0.5, 0.5, 0.5});
    Tensor y2 = Tensor::from_data({2, 2}, {1, 1, 0, 0});
    // 1 - (2*1 + 1) / (2 + 2 + 1)
    CHECK(dice_loss(half, y2).item() == doctest::Approx(1.0 - 3.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("seg loss is bce plus dice") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor p = random_tensor({4, 4}, rng, false, 0.01, 0.99);
        Tensor y = Tensor::zeros({4, 4});
        for (int i = 0; i < 16; ++i) y.data()[i] = rng.below(2) ? 1.0 : 0.0;
        CHECK(seg_loss(p, y).item() ==
              doctest::Approx(bce_loss(p, y).item() + dice_loss(p, y).item()).epsilon(1e-12));
    }
}

TEST_CASE("fdl is exactly 0.8 when the prediction is uniform 0.5") {
    Rng rng(3);
    Tensor features = random_tensor({6, 4, 4}, rng, false, 0.0, 2.0);
    Tensor pred = Tensor::from_data({4, 4}, std::vector<double>(16, 0.5));
    CHECK(fdl_loss(features, pred).item() == doctest::Approx(0.8));
    // F1 and F0 are bitwise equal, so the cosine clamps to exactly 1.
    CHECK(fdl_loss(features, pred).item() == 1.0 - 0.2);
}

TEST_CASE("fdl is zero for orthogonal class prototypes") {
    // Channel 0 only fires inside the predicted foreground, channel 1
    // only outside, so F1 = (a, 0) and F0 = (0, b).
    Tensor pred = Tensor::from_data({2, 2}, {1, 1, 0, 0});
    Tensor features = Tensor::from_data({2, 2, 2}, {3, 5, 0, 0, 0, 0, 2, 7});
    CHECK(fdl_loss(features, pred).item() == 0.0);
}

TEST_CASE("fdl matches the independent oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor features = random_tensor({5, 4, 4}, rng, false, 0.0, 1.5);
        Tensor pred = random_tensor({4, 4}, rng, false, 0.01, 0.99);
        CHECK(fdl_loss(features, pred).item() ==
              doctest::Approx(fdl_oracle(features, pred, 0.2)).epsilon(1e-12));
    }
}

TEST_CASE("fdl downsamples the prediction by block averaging") {
    Rng rng(7);
    Tensor features = random_tensor({3, 2, 2}, rng, false, 0.0, 1.0);
    Tensor pred = random_tensor({4, 4}, rng, false, 0.0, 1.0);
    Tensor down = ops::downsample_avg(pred, 2, 2);
    CHECK(fdl_loss(features, pred).item() ==
          doctest::Approx(fdl_loss(features, down).item()).epsilon(1e-12));
}

TEST_CASE("fdl bounds and feature-scale invariance") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor features = random_tensor({4, 3, 3}, rng, false, 0.0, 2.0);
        Tensor pred = random_tensor({3, 3}, rng, false, 0.0, 1.0);
        const double v = fdl_loss(features, pred).item();
        CHECK(v >= 0.0);
        CHECK(v <= 0.8);
        const double s = rng.uniform(0.5, 4.0);
        Tensor scaled = ops::affine(features, s, 0.0);
        CHECK(std::abs(fdl_loss(scaled, pred).item() - v) < 1e-9);
    }
}

TEST_CASE("fdl hinge clips below delta") {
    LossConfig big;
    big.delta = 1.5;  // above any attainable cosine
    Rng rng(13);
    Tensor features = random_tensor({4, 2, 2}, rng, false, 0.0, 1.0);
    Tensor pred = random_tensor({2, 2}, rng, false, 0.1, 0.9);
    CHECK(fdl_loss(features, pred, big).item() == 0.0);
}

TEST_CASE("total loss arithmetic") {
    Rng rng(17);
    std::vector<LabeledExample> labeled;
    std::vector<std::pair<Tensor, Tensor>> unlabeled;
    double seg_sum = 0.0, fdl_sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        Tensor p = random_tensor({4, 4}, rng, false, 0.05, 0.95);
        Tensor y = Tensor::zeros({4, 4});
        for (int j = 0; j < 16; ++j) y.data()[j] = rng.below(2) ? 1.0 : 0.0;
        labeled.push_back({p, y});
        seg_sum += seg_loss(p, y).item();
    }
    for (int i = 0; i < 2; ++i) {
        Tensor f = random_tensor({4, 2, 2}, rng, false, 0.0, 1.0);
        Tensor p = random_tensor({2, 2}, rng, false, 0.1, 0.9);
        unlabeled.emplace_back(f, p);
        fdl_sum += fdl_loss(f, p).item();
    }
    const double expect = seg_sum / 3.0 + 0.1 * fdl_sum / 2.0;
    CHECK(total_loss(labeled, unlabeled).item() == doctest::Approx(expect).epsilon(1e-12));

    // Supervised-only readings agree with each other.
    LossConfig no_disc;
    no_disc.lambda_c = 0.0;
    CHECK(total_loss(labeled, unlabeled, no_disc).item() ==
          doctest::Approx(seg_sum / 3.0).epsilon(1e-12));
    CHECK(total_loss(labeled, {}).item() == doctest::Approx(seg_sum / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(total_loss({}, unlabeled), std::invalid_argument);
}

TEST_CASE("loss config validation") {
    LossConfig bad;
    bad.delta = -0.1;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = {};
    bad.lambda_c = -1.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = {};
    bad.dice_smooth = 0.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    CHECK_NOTHROW(validate(LossConfig{}));
}

TEST_CASE("loss gradients vs finite differences") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor plog = random_tensor({4, 4}, rng, true, -1.5, 1.5);
        Tensor y = Tensor::zeros({4, 4});
        for (int j = 0; j < 16; ++j) y.data()[j] = rng.below(2) ? 1.0 : 0.0;
        Tensor flog = random_tensor({4, 2, 2}, rng, true, -1.0, 1.0);

        auto f = [&] {
            Tensor p = ops::sigmoid(plog);
            Tensor feats = ops::relu(flog);
            return total_loss({{p, y}}, {{feats, ops::downsample_avg(p, 2, 2)}});
        };
        CHECK(finite_difference_check(f, {plog, flog}, 1e-6) < 1e-4);
    }
}
