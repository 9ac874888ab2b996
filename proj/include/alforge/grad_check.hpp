#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "alforge/tensor.hpp"

namespace alforge {

// Central finite-difference verification of reverse-mode gradients.
// f must rebuild its graph from the current parameter values on every
// call and return a scalar. Returns the max over checked parameter
// elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// max_checks_per_param < 0 checks every element; otherwise a seeded
// subsample of that size per parameter tensor.
//
// ignore_below skips elements where both the analytic and the numeric
// value are under the given magnitude: central differences have an
// absolute noise floor of roughly eps * |f| / step (~1e-11 for unit
// losses at step 1e-5), so relative comparisons below that floor are
// meaningless. A genuinely wrong gradient still shows up on the many
// elements above the floor.
inline double finite_difference_check(const std::function<Tensor()>& f,
                                      const std::vector<Tensor>& params, double step,
                                      int64_t max_checks_per_param = -1,
                                      uint64_t subsample_seed = 0, double ignore_below = 0.0) {
    if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be > 0");

    Tape tape;
    std::vector<std::vector<double>> analytic;
    {
        TapeGuard guard(tape);
        Tensor loss = f();
        tape.backward(loss);
    }
    for (const auto& p : params) analytic.push_back(p.grad());

    double max_rel = 0.0;
    uint64_t lcg = subsample_seed * 6364136223846793005ull + 1442695040888963407ull;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        const int64_t n = p.numel();
        std::vector<int64_t> idx;
        if (max_checks_per_param < 0 || n <= max_checks_per_param) {
            idx.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t k = 0; k < max_checks_per_param; ++k) {
                lcg = lcg * 6364136223846793005ull + 1442695040888963407ull;
                idx.push_back(static_cast<int64_t>((lcg >> 33) % static_cast<uint64_t>(n)));
            }
        }
        for (int64_t i : idx) {
            const double saved = p.data()[i];
            p.data()[i] = saved + step;
            const double fp = f().item();
            p.data()[i] = saved - step;
            const double fm = f().item();
            p.data()[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi][static_cast<size_t>(i)];
            if (std::max(std::abs(a), std::abs(numeric)) < ignore_below) continue;
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace alforge
