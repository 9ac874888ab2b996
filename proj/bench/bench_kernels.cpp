// Timings for the OpenMP kernels against the serial reference, plus a
// whole training step. The two paths are bit-identical by construction;
// this target only compares speed.

#include <chrono>
#include <cstdio>
#include <vector>

#include "alforge/dataset.hpp"
#include "alforge/kernels.hpp"
#include "alforge/loop.hpp"
#include "alforge/model.hpp"
#include "alforge/rng.hpp"

using namespace alforge;
namespace chrono = std::chrono;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warmup
    auto t0 = chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return chrono::duration<double, std::milli>(chrono::steady_clock::now() - t0).count() / reps;
}

void bench_conv(int n, int c, int hw, int f, int k, int stride, int reps) {
    Rng rng(1);
    const auto d = kernels::conv_dims(n, c, hw, hw, f, k, k, stride, 1);
    std::vector<double> in(size_t(n) * c * hw * hw), ker(size_t(f) * c * k * k),
        out(size_t(n) * f * d.oh * d.ow), dker(ker.size(), 0.0), din(in.size(), 0.0);
    for (auto& v : in) v = rng.uniform(-1, 1);
    for (auto& v : ker) v = rng.uniform(-1, 1);

    const double flops = 2.0 * n * f * c * k * k * d.oh * d.ow;
    auto report = [&](const char* name, double serial_ms, double omp_ms) {
        std::printf("  %-16s serial %8.3f ms (%6.2f GFLOP/s)   omp %8.3f ms (%6.2f GFLOP/s)\n",
                    name, serial_ms, flops / serial_ms * 1e-6, omp_ms, flops / omp_ms * 1e-6);
    };
    report("forward",
           time_ms([&] { kernels::conv2d_forward_serial(in.data(), ker.data(), out.data(), d); }, reps),
           time_ms([&] { kernels::conv2d_forward_omp(in.data(), ker.data(), out.data(), d); }, reps));
    report("backward-input",
           time_ms([&] { kernels::conv2d_backward_input_serial(out.data(), ker.data(), din.data(), d); }, reps),
           time_ms([&] { kernels::conv2d_backward_input_omp(out.data(), ker.data(), din.data(), d); }, reps));
    report("backward-kernel",
           time_ms([&] { kernels::conv2d_backward_kernel_serial(out.data(), in.data(), dker.data(), d); }, reps),
           time_ms([&] { kernels::conv2d_backward_kernel_omp(out.data(), in.data(), dker.data(), d); }, reps));
}

void bench_train_step() {
    DatasetSpec spec;
    spec.n_train = 16;
    spec.n_test = 1;
    Dataset ds = generate_dataset(spec);
    OracleAnnotator oracle(ds);
    ALConfig cfg;
    cfg.epochs_per_round = 1;
    cfg.batch_size = 8;
    std::vector<int> labeled{0, 1, 2, 3, 4, 5, 6, 7}, unlabeled{8, 9, 10, 11, 12, 13, 14, 15};

    for (bool parallel : {false, true}) {
        kernels::set_parallel(parallel);
        ModelParams params = init_params(0);
        Adam adam(cfg.lr);
        auto t0 = chrono::steady_clock::now();
        train_round(params, adam, ds, labeled, unlabeled, oracle, cfg, 0, true);
        const double ms = chrono::duration<double, std::milli>(chrono::steady_clock::now() - t0).count();
        std::printf("  train epoch (8 labeled + 8 unlabeled, 64x64) %-6s %8.1f ms\n",
                    parallel ? "omp" : "serial", ms);
    }
    kernels::set_parallel(true);
}

}  // namespace

int main() {
    std::printf("conv2d 1x8x64x64 -> 16 filters 3x3 stride 1:\n");
    bench_conv(1, 8, 64, 16, 3, 1, 20);
    std::printf("conv2d 1x16x32x32 -> 32 filters 3x3 stride 2:\n");
    bench_conv(1, 16, 32, 32, 3, 2, 20);
    std::printf("train step comparison:\n");
    bench_train_step();
    return 0;
}
