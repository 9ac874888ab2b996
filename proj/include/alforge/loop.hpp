#pragma once

#include <string>
#include <vector>

#include "alforge/dataset.hpp"
#include "alforge/losses.hpp"
#include "alforge/model.hpp"
#include "alforge/strategy.hpp"

namespace alforge {

struct ALConfig {
    int rounds = 5;
    int budget = 10;
    int initial_labeled = 10;
    int epochs_per_round = 5;
    int batch_size = 8;
    // Desk-scale default: the tiny model sees fewer than 200 optimizer
    // steps in a full run, so it needs a much larger step size than a
    // full-scale segmentation setup would use.
    double lr = 1e-2;
    LossConfig loss;
    std::string strategy = "ours";
    DatasetSpec dataset;
    std::string dataset_path;  // when non-empty, load from disk instead of generating
    uint64_t seed = 0;
    double eval_threshold = 0.5;
    ModelConfig model;
};

void validate(const ALConfig& cfg);

struct RoundMetrics {
    int round_index = 0;
    int labeled_count = 0;
    double miou = 0.0;
    double dice = 0.0;
    double wall_seconds = 0.0;
    std::vector<int> selected_ids;
};

struct RunResult {
    ALConfig config;
    std::vector<RoundMetrics> rounds;             // length rounds+1
    std::vector<std::string> selection_json;      // one per selection round (1..R)
};

// Single-image IoU / Dice of a thresholded prediction map against a
// binary truth mask; an empty prediction on an empty truth counts as 1.
std::pair<double, double> mask_metrics(const Tensor& pred, const std::vector<uint8_t>& truth,
                                       double threshold);

// Threshold the prediction and report mean foreground IoU / Dice over
// the test set; an empty prediction on an empty truth counts as 1.
std::pair<double, double> evaluate(const ModelParams& params, const std::vector<Sample>& test_set,
                                   double threshold);

// One fine-tuning pass: epochs_per_round seeded-shuffled epochs over
// the labeled set, each labeled batch paired with an equal-size
// uniformly drawn unlabeled batch for the discrepancy term.
void train_round(ModelParams& params, Adam& adam, const Dataset& ds,
                 const std::vector<int>& labeled_ids, const std::vector<int>& unlabeled_ids,
                 const OracleAnnotator& oracle, const ALConfig& cfg, uint64_t round_seed,
                 bool use_fdl);

// Scores every unlabeled sample with the current model (read-only, so
// samples fan out in parallel) and collects labeled image features for
// the coreset baseline.
SamplePool score_pool(const ModelParams& params, const Dataset& ds,
                      const std::vector<int>& labeled_ids, const std::vector<int>& unlabeled_ids);

RunResult run_experiment(const ALConfig& cfg);
RunResult run_experiment(const ALConfig& cfg, const Dataset& ds);

struct AblationTable {
    std::vector<std::string> row_names;  // ours, w/o UNC, w/o CLU, w/o DIS
    std::vector<int> labeled_counts;     // rounds+1 checkpoints
    std::vector<std::vector<double>> miou;  // row-major, mean over seeds
    std::vector<RunResult> runs;         // all underlying cells
};

AblationTable run_ablation(const ALConfig& cfg, const std::vector<uint64_t>& seeds, int jobs = 1);

// --- persistence ---

// Canonical results JSON. wall_seconds is deliberately kept out (it
// goes to a timing sidecar) so that replays are byte-identical.
std::string run_result_to_json(const RunResult& res);
std::string timing_to_json(const RunResult& res);
std::string run_file_stem(const RunResult& res);

// Writes results_<stem>.json, selections_<stem>.json, timing_<stem>.json
// atomically, then rebuilds aggregate.csv from every results file in dir.
void write_run_result(const std::string& dir, const RunResult& res);
void write_aggregate_csv(const std::string& dir);
std::string ablation_table_to_csv(const AblationTable& table);

ALConfig alconfig_from_json_file(const std::string& path);
ALConfig alconfig_from_json_string(const std::string& text);
std::string alconfig_to_json(const ALConfig& cfg);

}  // namespace alforge
