#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "alforge/losses.hpp"
#include "alforge/model.hpp"
#include "alforge/ops.hpp"
#include "alforge/rng.hpp"

using namespace alforge;

namespace {

Tensor random_image(int channels, int size, uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({channels, size, size});
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(0.0, 1.0);
    return t;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.named.size() != b.named.size()) return false;
    for (size_t i = 0; i < a.named.size(); ++i) {
        if (a.named[i].first != b.named[i].first) return false;
        if (a.named[i].second.shape() != b.named[i].second.shape()) return false;
        if (a.named[i].second.vec() != b.named[i].second.vec()) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("init_params is deterministic in seed") {
    ModelParams a = init_params(42), b = init_params(42), c = init_params(43);
    CHECK(params_equal(a, b));
    CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("init_params zeroes biases and bounds kernels") {
    ModelParams p = init_params(0);
    int bias_tensors = 0;
    for (const auto& [name, t] : p.named) {
        if (name.size() >= 2 && name.substr(name.size() - 2) == ".b") {
            ++bias_tensors;
            for (double v : t.vec()) CHECK(v == 0.0);
        } else {
            // fan_in bound: kernel entries are uniform in +-sqrt(1/fan_in)
            const int fan_in = t.dim(1) * t.dim(2) * t.dim(3);
            const double bound = std::sqrt(1.0 / fan_in);
            for (double v : t.vec()) {
                CHECK(std::abs(v) <= bound);
            }
        }
    }
    CHECK(bias_tensors == 8);
    CHECK(p.named.size() == 16);
}

TEST_CASE("forward on a zero image gives prediction exactly 0.5") {
    ModelParams p = init_params(7);
    Tensor image = Tensor::zeros({3, 32, 32});
    ModelOutput out = forward(p, image);
    for (int64_t i = 0; i < out.prediction.numel(); ++i) CHECK(out.prediction.data()[i] == 0.5);
}

TEST_CASE("forward shape contract") {
    ModelParams p = init_params(1);
    ModelOutput out = forward(p, random_image(3, 64, 5));
    CHECK(out.prediction.shape() == Shape{64, 64});
    CHECK(out.features.shape() == Shape{32, 16, 16});
    for (int64_t i = 0; i < out.prediction.numel(); ++i) {
        CHECK(out.prediction.data()[i] > 0.0);
        CHECK(out.prediction.data()[i] < 1.0);
    }
    for (int64_t i = 0; i < out.features.numel(); ++i) CHECK(out.features.data()[i] >= 0.0);

    ModelConfig small{3, 4, 6, 10};
    ModelOutput out2 = forward(init_params(1, small), random_image(3, 16, 6));
    CHECK(out2.prediction.shape() == Shape{16, 16});
    CHECK(out2.features.shape() == Shape{10, 4, 4});
}

TEST_CASE("forward rejects bad input shapes") {
    ModelParams p = init_params(0);
    CHECK_THROWS_AS(forward(p, Tensor::zeros({1, 32, 32})), std::invalid_argument);
    CHECK_THROWS_AS(forward(p, Tensor::zeros({3, 30, 30})), std::invalid_argument);
}

TEST_CASE("forward is deterministic") {
    ModelParams p = init_params(3);
    Tensor image = random_image(3, 32, 9);
    ModelOutput a = forward(p, image);
    ModelOutput b = forward(p, image);
    CHECK(a.prediction.vec() == b.prediction.vec());
    CHECK(a.features.vec() == b.features.vec());
}

TEST_CASE("Adam single-step closed form") {
    // With g constant, m_hat = g and v_hat = g^2 at t=1, so the step is
    // lr * g / (|g| + eps) ~= lr * sign(g).
    ModelParams p;
    p.named.emplace_back("w", Tensor::from_data({2}, {1.0, -2.0}));
    Adam adam(0.1);
    adam.step(p, {{1.0, 1.0}});
    CHECK(p.named[0].second.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p.named[0].second.data()[1] == doctest::Approx(-2.1).epsilon(1e-6));
    CHECK(adam.step_count() == 1);
}

TEST_CASE("Adam zero gradient is a fixed point") {
    ModelParams p;
    p.named.emplace_back("w", Tensor::from_data({3}, {0.5, -1.0, 2.0}));
    Adam adam(0.01);
    for (int i = 0; i < 5; ++i) adam.step(p, {{0.0, 0.0, 0.0}});
    CHECK(p.named[0].second.vec() == std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("Adam minimizes a quadratic") {
    ModelParams p;
    p.named.emplace_back("w", Tensor::from_data({1}, {3.0}));
    Adam adam(0.05);
    for (int i = 0; i < 2000; ++i) {
        const double w = p.named[0].second.data()[0];
        adam.step(p, {{2.0 * w}});
    }
    CHECK(std::abs(p.named[0].second.data()[0]) < 1e-3);
}

TEST_CASE("Adam rejects mismatched gradient sizes") {
    ModelParams p;
    p.named.emplace_back("w", Tensor::from_data({2}, {1.0, 2.0}));
    Adam adam;
    CHECK_THROWS_AS(adam.step(p, {{1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(adam.step(p, {}), std::invalid_argument);
}

TEST_CASE("model can overfit a single example") {
    ModelConfig cfg{3, 4, 8, 16};
    ModelParams params = init_params(11, cfg);
    Tensor image = random_image(3, 32, 21);
    Tensor target = Tensor::zeros({32, 32});
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x) target.data()[y * 32 + x] = 1.0;

    Adam adam(1e-2);
    double last = 0.0;
    for (int step = 0; step < 500; ++step) {
        ModelParams live = params.clone(true);
        Tape tape;
        Tensor loss;
        {
            TapeGuard guard(tape);
            ModelOutput out = forward(live, image);
            loss = seg_loss(out.prediction, target);
        }
        tape.backward(loss);
        last = loss.item();
        std::vector<std::vector<double>> grads;
        for (const auto& [name, t] : live.named) grads.push_back(t.grad());
        adam.step(params, grads);
    }
    CHECK(last < 0.2);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "alforge_test_ckpt.bin";
    ModelConfig cfg{3, 4, 6, 10};
    ModelParams p = init_params(99, cfg);
    save_checkpoint(path.string(), p, 99, 17);

    uint64_t seed = 0;
    int steps = 0;
    ModelParams q = load_checkpoint(path.string(), &seed, &steps);
    CHECK(seed == 99);
    CHECK(steps == 17);
    CHECK(q.cfg == cfg);
    CHECK(params_equal(p, q));

    Tensor image = random_image(3, 16, 1);
    CHECK(forward(p, image).prediction.vec() == forward(q, image).prediction.vec());
    fs::remove(path);
}

TEST_CASE("load_checkpoint rejects a bad magic") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "alforge_bad_ckpt.bin";
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fputs("NOTACKPT garbage", f);
    std::fclose(f);
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
    fs::remove(path);
}
