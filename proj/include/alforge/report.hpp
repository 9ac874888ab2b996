#pragma once

#include <string>
#include <vector>

namespace alforge {

struct CurvePoint {
    std::string strategy;
    uint64_t seed = 0;
    int round = 0;
    int labeled_count = 0;
    double miou = 0.0;
    double dice = 0.0;
};

// Reads every results_*.json under dir.
std::vector<CurvePoint> load_curve_points(const std::string& dir);

// mIoU-vs-labeled-count learning curves, one polyline per strategy
// (mean over seeds). Emitted by direct string construction so the
// output is byte-stable.
std::string curves_to_svg(const std::vector<CurvePoint>& points);

// One row per (run, round): strategy,seed,round,labeled_count,miou,dice.
std::string curves_to_csv(const std::vector<CurvePoint>& points);

}  // namespace alforge
