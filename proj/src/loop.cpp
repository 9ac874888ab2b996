#include "alforge/loop.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "alforge/kernels.hpp"
#include "alforge/ops.hpp"
#include "alforge/rng.hpp"

namespace alforge {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const ALConfig& cfg) {
    validate(cfg.loss);
    if (cfg.dataset_path.empty()) validate(cfg.dataset);
    if (cfg.rounds < 0) throw ValidationError("ALConfig: rounds must be >= 0");
    if (cfg.budget < 1) throw ValidationError("ALConfig: budget must be >= 1");
    if (cfg.initial_labeled < 1) throw ValidationError("ALConfig: initial_labeled must be >= 1");
    if (cfg.epochs_per_round < 0) throw ValidationError("ALConfig: epochs_per_round must be >= 0");
    if (cfg.batch_size < 1) throw ValidationError("ALConfig: batch_size must be >= 1");
    if (cfg.lr <= 0.0) throw ValidationError("ALConfig: lr must be > 0");
    if (cfg.eval_threshold <= 0.0 || cfg.eval_threshold >= 1.0)
        throw ValidationError("ALConfig: eval_threshold must be in (0,1)");
    if (cfg.dataset_path.empty() &&
        cfg.initial_labeled + cfg.rounds * cfg.budget > cfg.dataset.n_train)
        throw ValidationError("ALConfig: initial_labeled + rounds*budget exceeds n_train");
    try {
        parse_strategy(cfg.strategy);
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("ALConfig: ") + e.what());
    }
}

namespace {

Tensor mask_to_tensor(const std::vector<uint8_t>& mask, int h, int w) {
    std::vector<double> data(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 1.0 : 0.0;
    return Tensor::from_data({h, w}, std::move(data));
}

std::pair<double, double> image_iou_dice(const Tensor& pred, const std::vector<uint8_t>& truth,
                                         double threshold) {
    int64_t inter = 0, psum = 0, gsum = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred.data()[i] > threshold;
        const bool g = truth[static_cast<size_t>(i)] != 0;
        inter += (p && g);
        psum += p;
        gsum += g;
    }
    const int64_t uni = psum + gsum - inter;
    const double iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
    const double dice =
        psum + gsum > 0 ? 2.0 * static_cast<double>(inter) / static_cast<double>(psum + gsum) : 1.0;
    return {iou, dice};
}

}  // namespace

std::pair<double, double> mask_metrics(const Tensor& pred, const std::vector<uint8_t>& truth,
                                       double threshold) {
    if (static_cast<size_t>(pred.numel()) != truth.size())
        throw std::invalid_argument("mask_metrics: prediction/truth size mismatch");
    return image_iou_dice(pred, truth, threshold);
}

std::pair<double, double> evaluate(const ModelParams& params, const std::vector<Sample>& test_set,
                                   double threshold) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("evaluate: threshold must be in (0,1)");
    const int n = static_cast<int>(test_set.size());
    std::vector<double> ious(static_cast<size_t>(n)), dices(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
    for (int i = 0; i < n; ++i) {
        ModelOutput out = forward(params, test_set[static_cast<size_t>(i)].image);
        const auto [iou, dice] = image_iou_dice(out.prediction, test_set[static_cast<size_t>(i)].mask, threshold);
        ious[static_cast<size_t>(i)] = iou;
        dices[static_cast<size_t>(i)] = dice;
    }
    double miou = 0.0, mdice = 0.0;
    for (int i = 0; i < n; ++i) {
        miou += ious[static_cast<size_t>(i)];
        mdice += dices[static_cast<size_t>(i)];
    }
    return {miou / n, mdice / n};
}

namespace {

// Per-sample loss terms are independent, so each task runs on its own
// parameter clone and tape; gradients are then accumulated serially in
// task order, which keeps the result independent of the thread count.
struct GradTask {
    const Tensor* image;
    const std::vector<uint8_t>* mask;  // null for unlabeled (discrepancy) tasks
};

double batch_gradients(const ModelParams& params, const std::vector<GradTask>& tasks,
                       size_t n_labeled, const LossConfig& loss_cfg,
                       std::vector<std::vector<double>>& grads_out) {
    const size_t n_params = params.named.size();
    const size_t n_unlabeled = tasks.size() - n_labeled;
    std::vector<std::vector<std::vector<double>>> task_grads(tasks.size());
    std::vector<double> task_loss(tasks.size(), 0.0);

    const int nt = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
    for (int t = 0; t < nt; ++t) {
        const GradTask& task = tasks[static_cast<size_t>(t)];
        ModelParams local = params.clone(/*requires_grad=*/true);
        Tape tape;
        Tensor loss;
        {
            TapeGuard guard(tape);
            ModelOutput out = forward(local, *task.image);
            if (task.mask) {
                Tensor target = mask_to_tensor(*task.mask, out.prediction.dim(0), out.prediction.dim(1));
                loss = seg_loss(out.prediction, target, loss_cfg);
            } else {
                loss = fdl_loss(out.features, out.prediction, loss_cfg);
            }
            tape.backward(loss);
        }
        task_loss[static_cast<size_t>(t)] = loss.item();
        auto& tg = task_grads[static_cast<size_t>(t)];
        tg.reserve(n_params);
        for (auto& [name, p] : local.named) tg.push_back(p.grad());
    }

    grads_out.assign(n_params, {});
    for (size_t pi = 0; pi < n_params; ++pi)
        grads_out[pi].assign(params.named[pi].second.vec().size(), 0.0);
    const double sl = 1.0 / static_cast<double>(n_labeled);
    const double su = n_unlabeled > 0 ? loss_cfg.lambda_c / static_cast<double>(n_unlabeled) : 0.0;
    double total = 0.0;
    for (size_t t = 0; t < tasks.size(); ++t) {
        const double scale = t < n_labeled ? sl : su;
        total += scale * task_loss[t];
        for (size_t pi = 0; pi < n_params; ++pi) {
            const auto& g = task_grads[t][pi];
            auto& acc = grads_out[pi];
            for (size_t i = 0; i < g.size(); ++i) acc[i] += scale * g[i];
        }
    }
    return total;
}

}  // namespace

void train_round(ModelParams& params, Adam& adam, const Dataset& ds,
                 const std::vector<int>& labeled_ids, const std::vector<int>& unlabeled_ids,
                 const OracleAnnotator& oracle, const ALConfig& cfg, uint64_t round_seed,
                 bool use_fdl) {
    if (labeled_ids.empty()) throw std::invalid_argument("train_round: empty labeled set");
    Rng rng = Rng::derive(round_seed, "train-round");
    const bool fdl = use_fdl && cfg.loss.lambda_c > 0.0 && !unlabeled_ids.empty();

    for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
        std::vector<int> order = labeled_ids;
        for (size_t i = 0; i + 1 < order.size(); ++i) {
            const size_t j = i + rng.below(order.size() - i);
            std::swap(order[i], order[j]);
        }
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<GradTask> tasks;
            for (size_t i = start; i < end; ++i) {
                const Sample& s = ds.train[static_cast<size_t>(order[i])];
                tasks.push_back({&s.image, &oracle.annotate(s.sample_id)});
            }
            const size_t n_labeled = tasks.size();
            if (fdl) {
                for (size_t i = start; i < end; ++i) {
                    const int uid = unlabeled_ids[static_cast<size_t>(rng.below(unlabeled_ids.size()))];
                    tasks.push_back({&ds.train[static_cast<size_t>(uid)].image, nullptr});
                }
            }
            std::vector<std::vector<double>> grads;
            batch_gradients(params, tasks, n_labeled, cfg.loss, grads);
            adam.step(params, grads);
        }
    }
}

SamplePool score_pool(const ModelParams& params, const Dataset& ds,
                      const std::vector<int>& labeled_ids, const std::vector<int>& unlabeled_ids) {
    SamplePool pool;
    pool.unlabeled.resize(unlabeled_ids.size());
    const int nu = static_cast<int>(unlabeled_ids.size());
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
    for (int i = 0; i < nu; ++i) {
        const Sample& s = ds.train[static_cast<size_t>(unlabeled_ids[static_cast<size_t>(i)])];
        ModelOutput out = forward(params, s.image);
        SampleScore& sc = pool.unlabeled[static_cast<size_t>(i)];
        sc.sample_id = s.sample_id;
        sc.uncertainty = uncertainty_score(out.features, out.prediction);
        sc.entropy = entropy_score(out.prediction);
        sc.image_feature = image_feature(out.features).vec();
    }
    pool.labeled_features.resize(labeled_ids.size());
    const int nl = static_cast<int>(labeled_ids.size());
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
    for (int i = 0; i < nl; ++i) {
        const Sample& s = ds.train[static_cast<size_t>(labeled_ids[static_cast<size_t>(i)])];
        ModelOutput out = forward(params, s.image);
        pool.labeled_features[static_cast<size_t>(i)] = image_feature(out.features).vec();
    }
    return pool;
}

RunResult run_experiment(const ALConfig& cfg) {
    validate(cfg);
    Dataset ds = cfg.dataset_path.empty() ? generate_dataset(cfg.dataset)
                                          : load_dataset(cfg.dataset_path);
    return run_experiment(cfg, ds);
}

RunResult run_experiment(const ALConfig& cfg, const Dataset& ds) {
    validate(cfg);
    const int n_train = static_cast<int>(ds.train.size());
    if (cfg.initial_labeled + cfg.rounds * cfg.budget > n_train)
        throw ValidationError("run_experiment: budget exhausts the training pool");

    OracleAnnotator oracle(ds);
    ModelParams params = init_params(cfg.seed, cfg.model);
    Adam adam(cfg.lr);
    const Strategy strategy = parse_strategy(cfg.strategy);

    // The seed pool is drawn from cfg.seed only, so every strategy under
    // the same seed starts from the same labeled set.
    std::vector<int> ids(static_cast<size_t>(n_train));
    std::iota(ids.begin(), ids.end(), 0);
    {
        Rng rng = Rng::derive(cfg.seed, "initial-labeled");
        for (int i = 0; i < cfg.initial_labeled; ++i) {
            const size_t j = static_cast<size_t>(i) + rng.below(ids.size() - static_cast<size_t>(i));
            std::swap(ids[static_cast<size_t>(i)], ids[j]);
        }
    }
    std::vector<int> labeled(ids.begin(), ids.begin() + cfg.initial_labeled);
    std::vector<int> unlabeled(ids.begin() + cfg.initial_labeled, ids.end());
    std::sort(labeled.begin(), labeled.end());
    std::sort(unlabeled.begin(), unlabeled.end());

    RunResult res;
    res.config = cfg;

    using clock = std::chrono::steady_clock;
    auto record_round = [&](int round, const std::vector<int>& selected, double secs) {
        RoundMetrics m;
        m.round_index = round;
        m.labeled_count = static_cast<int>(labeled.size());
        auto [miou, dice] = evaluate(params, ds.test, cfg.eval_threshold);
        m.miou = miou;
        m.dice = dice;
        m.selected_ids = selected;
        m.wall_seconds = secs;
        res.rounds.push_back(std::move(m));
    };

    // Round 0 trains on the shared seed set without the discrepancy
    // term, so ablation variants that only differ in lambda_c share the
    // first checkpoint exactly.
    {
        auto t0 = clock::now();
        train_round(params, adam, ds, labeled, unlabeled, oracle, cfg,
                    Rng::derive(cfg.seed, "round", 0).next_u64(), /*use_fdl=*/false);
        // No acquisition happens in round 0; the seed pool is recoverable
        // from the run seed alone.
        record_round(0, {}, std::chrono::duration<double>(clock::now() - t0).count());
    }

    for (int round = 1; round <= cfg.rounds; ++round) {
        auto t0 = clock::now();
        SamplePool pool = score_pool(params, ds, labeled, unlabeled);
        const uint64_t sel_seed = Rng::derive(cfg.seed, "select", static_cast<uint64_t>(round)).next_u64();
        std::vector<int> selected = select_batch(strategy, pool, cfg.budget, sel_seed);
        res.selection_json.push_back(selection_to_json(round, cfg.strategy, selected, pool));

        for (int id : selected) {
            oracle.annotate(id);  // annotation event; the mask itself reaches training via the oracle
            auto it = std::find(unlabeled.begin(), unlabeled.end(), id);
            if (it == unlabeled.end())
                throw std::logic_error("run_experiment: selected id not in unlabeled pool");
            unlabeled.erase(it);
            labeled.insert(std::upper_bound(labeled.begin(), labeled.end(), id), id);
        }

        train_round(params, adam, ds, labeled, unlabeled, oracle, cfg,
                    Rng::derive(cfg.seed, "round", static_cast<uint64_t>(round)).next_u64(),
                    /*use_fdl=*/true);
        record_round(round, selected, std::chrono::duration<double>(clock::now() - t0).count());
    }
    return res;
}

AblationTable run_ablation(const ALConfig& cfg, const std::vector<uint64_t>& seeds, int jobs) {
    if (seeds.empty()) throw ValidationError("run_ablation: at least one seed required");
    validate(cfg);
    Dataset ds = cfg.dataset_path.empty() ? generate_dataset(cfg.dataset)
                                          : load_dataset(cfg.dataset_path);

    struct Variant {
        const char* row;
        const char* strategy;
        bool zero_lambda;
    };
    const std::vector<Variant> variants = {
        {"ours", "ours", false},
        {"w/o UNC", "pure_kmeans", false},
        {"w/o CLU", "uncertainty_topB", false},
        {"w/o DIS", "ours", true},
    };

    std::vector<ALConfig> cells;
    for (uint64_t seed : seeds)
        for (const auto& v : variants) {
            ALConfig c = cfg;
            c.strategy = v.strategy;
            c.seed = seed;
            if (v.zero_lambda) c.loss.lambda_c = 0.0;
            cells.push_back(std::move(c));
        }

    std::vector<RunResult> results(cells.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            results[i] = run_experiment(cells[i], ds);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    AblationTable table;
    for (const auto& v : variants) table.row_names.push_back(v.row);
    for (const auto& m : results[0].rounds) table.labeled_counts.push_back(m.labeled_count);
    table.miou.assign(variants.size(), std::vector<double>(results[0].rounds.size(), 0.0));
    for (size_t si = 0; si < seeds.size(); ++si)
        for (size_t vi = 0; vi < variants.size(); ++vi) {
            const RunResult& r = results[si * variants.size() + vi];
            for (size_t ri = 0; ri < r.rounds.size(); ++ri)
                table.miou[vi][ri] += r.rounds[ri].miou / static_cast<double>(seeds.size());
        }
    table.runs = std::move(results);
    return table;
}

// --- persistence ---

namespace {

json loss_to_json(const LossConfig& l) {
    return {{"delta", l.delta},
            {"lambda_c", l.lambda_c},
            {"dice_smooth", l.dice_smooth},
            {"bce_clamp_eps", l.bce_clamp_eps}};
}

json dataset_spec_to_json(const DatasetSpec& s) {
    return {{"n_train", s.n_train},
            {"n_test", s.n_test},
            {"image_size", s.image_size},
            {"min_polyps", s.min_polyps},
            {"max_polyps", s.max_polyps},
            {"contrast_min", s.contrast_min},
            {"contrast_max", s.contrast_max},
            {"noise_amplitude", s.noise_amplitude},
            {"seed", s.seed}};
}

json config_to_json_obj(const ALConfig& cfg) {
    json j;
    j["schema_version"] = 1;
    j["rounds"] = cfg.rounds;
    j["budget"] = cfg.budget;
    j["initial_labeled"] = cfg.initial_labeled;
    j["epochs_per_round"] = cfg.epochs_per_round;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["loss"] = loss_to_json(cfg.loss);
    j["strategy"] = cfg.strategy;
    if (cfg.dataset_path.empty())
        j["dataset"] = dataset_spec_to_json(cfg.dataset);
    else
        j["dataset_path"] = cfg.dataset_path;
    j["seed"] = cfg.seed;
    j["eval_threshold"] = cfg.eval_threshold;
    j["model"] = {{"in_channels", cfg.model.in_channels},
                  {"c1", cfg.model.c1},
                  {"c2", cfg.model.c2},
                  {"c3", cfg.model.c3}};
    return j;
}

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string run_result_to_json(const RunResult& res) {
    json j;
    j["schema_version"] = 1;
    j["config"] = config_to_json_obj(res.config);
    json rounds = json::array();
    for (const auto& m : res.rounds)
        rounds.push_back({{"round_index", m.round_index},
                          {"labeled_count", m.labeled_count},
                          {"miou", m.miou},
                          {"dice", m.dice},
                          {"selected_ids", m.selected_ids}});
    j["rounds"] = rounds;
    return j.dump(2) + "\n";
}

std::string timing_to_json(const RunResult& res) {
    json j;
    j["schema_version"] = 1;
    json secs = json::array();
    for (const auto& m : res.rounds) secs.push_back(m.wall_seconds);
    j["wall_seconds"] = secs;
    return j.dump(2) + "\n";
}

std::string run_file_stem(const RunResult& res) {
    return res.config.strategy + "_seed" + std::to_string(res.config.seed);
}

void write_run_result(const std::string& dir, const RunResult& res) {
    fs::create_directories(dir);
    const std::string stem = run_file_stem(res);
    atomic_write(fs::path(dir) / ("results_" + stem + ".json"), run_result_to_json(res));
    atomic_write(fs::path(dir) / ("timing_" + stem + ".json"), timing_to_json(res));
    std::string sel = "[\n";
    for (size_t i = 0; i < res.selection_json.size(); ++i) {
        sel += res.selection_json[i];
        if (i + 1 < res.selection_json.size()) sel += ",";
        sel += "\n";
    }
    sel += "]\n";
    atomic_write(fs::path(dir) / ("selections_" + stem + ".json"), sel);
    write_aggregate_csv(dir);
}

void write_aggregate_csv(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("results_", 0) == 0 && name.size() > 5 &&
            name.substr(name.size() - 5) == ".json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::string csv = "strategy,seed,round,labeled_count,miou,dice\n";
    for (const auto& f : files) {
        std::ifstream in(f);
        json j = json::parse(in);
        const std::string strategy = j["config"]["strategy"];
        const uint64_t seed = j["config"]["seed"];
        for (const auto& r : j["rounds"]) {
            csv += strategy + "," + std::to_string(seed) + "," +
                   std::to_string(r["round_index"].get<int>()) + "," +
                   std::to_string(r["labeled_count"].get<int>()) + "," +
                   format_double(r["miou"].get<double>()) + "," +
                   format_double(r["dice"].get<double>()) + "\n";
        }
    }
    atomic_write(fs::path(dir) / "aggregate.csv", csv);
}

std::string ablation_table_to_csv(const AblationTable& table) {
    std::string csv = "method";
    for (int c : table.labeled_counts) csv += "," + std::to_string(c);
    csv += "\n";
    for (size_t r = 0; r < table.row_names.size(); ++r) {
        csv += table.row_names[r];
        for (double v : table.miou[r]) csv += "," + format_double(v);
        csv += "\n";
    }
    return csv;
}

ALConfig alconfig_from_json_string(const std::string& text) {
    json j = json::parse(text);
    if (j.contains("schema_version") && j["schema_version"] != 1)
        throw ValidationError("config: unsupported schema_version " + j["schema_version"].dump());
    ALConfig cfg;
    cfg.rounds = j.value("rounds", cfg.rounds);
    cfg.budget = j.value("budget", cfg.budget);
    cfg.initial_labeled = j.value("initial_labeled", cfg.initial_labeled);
    cfg.epochs_per_round = j.value("epochs_per_round", cfg.epochs_per_round);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        cfg.loss.delta = l.value("delta", cfg.loss.delta);
        cfg.loss.lambda_c = l.value("lambda_c", cfg.loss.lambda_c);
        cfg.loss.dice_smooth = l.value("dice_smooth", cfg.loss.dice_smooth);
        cfg.loss.bce_clamp_eps = l.value("bce_clamp_eps", cfg.loss.bce_clamp_eps);
    }
    cfg.strategy = j.value("strategy", cfg.strategy);
    if (j.contains("dataset_path")) {
        cfg.dataset_path = j["dataset_path"];
    } else if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        cfg.dataset.n_train = d.value("n_train", cfg.dataset.n_train);
        cfg.dataset.n_test = d.value("n_test", cfg.dataset.n_test);
        cfg.dataset.image_size = d.value("image_size", cfg.dataset.image_size);
        cfg.dataset.min_polyps = d.value("min_polyps", cfg.dataset.min_polyps);
        cfg.dataset.max_polyps = d.value("max_polyps", cfg.dataset.max_polyps);
        cfg.dataset.contrast_min = d.value("contrast_min", cfg.dataset.contrast_min);
        cfg.dataset.contrast_max = d.value("contrast_max", cfg.dataset.contrast_max);
        cfg.dataset.noise_amplitude = d.value("noise_amplitude", cfg.dataset.noise_amplitude);
        cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.eval_threshold = j.value("eval_threshold", cfg.eval_threshold);
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.in_channels = m.value("in_channels", cfg.model.in_channels);
        cfg.model.c1 = m.value("c1", cfg.model.c1);
        cfg.model.c2 = m.value("c2", cfg.model.c2);
        cfg.model.c3 = m.value("c3", cfg.model.c3);
    }
    return cfg;
}

ALConfig alconfig_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return alconfig_from_json_string(text);
}

std::string alconfig_to_json(const ALConfig& cfg) { return config_to_json_obj(cfg).dump(2) + "\n"; }

}  // namespace alforge
