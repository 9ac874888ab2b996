#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "alforge/dataset.hpp"
#include "alforge/loop.hpp"
#include "alforge/report.hpp"

namespace fs = std::filesystem;
using namespace alforge;

namespace {

// 0 success, 1 validation error, 2 runtime error
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

bool env_seed(uint64_t& out) {
    const char* v = std::getenv("AL_FORGE_SEED");
    if (!v || !*v) return false;
    out = std::strtoull(v, nullptr, 10);
    return true;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
    bool had_seed = false;
    DatasetSpec spec = dataset_spec_from_json_string(read_text(spec_path), &had_seed);
    uint64_t seed;
    if (!had_seed && env_seed(seed)) spec.seed = seed;
    validate(spec);
    Dataset ds = generate_dataset(spec);
    save_dataset(ds, out_dir);

    std::ifstream in(fs::path(out_dir) / "manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    const std::string imgs = manifest["checksums"]["images.bin"];
    const std::string msks = manifest["checksums"]["masks.bin"];
    const std::string combined = fnv1a64_hex((imgs + msks).data(), imgs.size() + msks.size());
    std::cout << "DATASET checksum=" << combined << " images=" << imgs << " masks=" << msks << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& strategy, bool have_seed,
            uint64_t seed, const std::string& out_dir) {
    nlohmann::json raw = nlohmann::json::parse(read_text(config_path));
    ALConfig cfg = alconfig_from_json_string(raw.dump());
    if (!strategy.empty()) cfg.strategy = strategy;
    uint64_t es;
    if (have_seed)
        cfg.seed = seed;
    else if (!raw.contains("seed") && env_seed(es))
        cfg.seed = es;
    validate(cfg);

    RunResult res = run_experiment(cfg);
    write_run_result(out_dir, res);
    const RoundMetrics& last = res.rounds.back();
    std::printf("FINAL miou=%.17g dice=%.17g\n", last.miou, last.dice);
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& seeds_arg,
               const std::string& out_dir, int jobs) {
    ALConfig cfg = alconfig_from_json_file(config_path);
    std::vector<uint64_t> seeds;
    std::stringstream ss(seeds_arg);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) seeds.push_back(std::strtoull(tok.c_str(), nullptr, 10));
    if (seeds.empty()) throw ValidationError("ablate: at least one seed required");
    validate(cfg);

    AblationTable table = run_ablation(cfg, seeds, jobs);
    fs::create_directories(out_dir);
    for (const auto& run : table.runs) write_run_result(out_dir, run);
    write_text((fs::path(out_dir) / "ablation_table.csv").string(), ablation_table_to_csv(table));
    std::cout << ablation_table_to_csv(table);
    return 0;
}

int cmd_report(const std::string& results_dir, const std::string& out_file) {
    auto points = load_curve_points(results_dir);
    if (out_file.size() > 4 && out_file.substr(out_file.size() - 4) == ".svg")
        write_text(out_file, curves_to_svg(points));
    else
        write_text(out_file, curves_to_csv(points));
    std::cout << "REPORT points=" << points.size() << " out=" << out_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active-learning experiment driver for binary segmentation on synthetic data"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, strategy, seeds_arg, results_dir, out_file;
    uint64_t seed = 0;
    int jobs = 1;

    auto* gen = app.add_subcommand("gen-data", "Generate a dataset from a spec file");
    gen->add_option("--spec", spec_path, "Dataset spec JSON")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();

    auto* run = app.add_subcommand("run", "Run one active-learning experiment");
    run->add_option("--config", config_path, "Experiment config JSON")->required();
    auto* strat_opt = run->add_option("--strategy", strategy, "Override selection strategy");
    auto* seed_opt = run->add_option("--seed", seed, "Override seed");
    run->add_option("--out", out_dir, "Output directory")->required();

    auto* abl = app.add_subcommand("ablate", "Run the 4-variant ablation grid");
    abl->add_option("--config", config_path, "Experiment config JSON")->required();
    abl->add_option("--seeds", seeds_arg, "Comma-separated seeds")->required();
    abl->add_option("--out", out_dir, "Output directory")->required();
    abl->add_option("--jobs", jobs, "Parallel grid cells");

    auto* rep = app.add_subcommand("report", "Emit learning curves from results");
    rep->add_option("--results", results_dir, "Results directory")->required();
    rep->add_option("--out", out_file, "Output file (.svg or .csv)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kExitValidation;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir);
        if (run->parsed())
            return cmd_run(config_path, strat_opt->count() ? strategy : "", seed_opt->count() > 0,
                           seed, out_dir);
        if (abl->parsed()) return cmd_ablate(config_path, seeds_arg, out_dir, jobs);
        if (rep->parsed()) return cmd_report(results_dir, out_file);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        // Malformed user-supplied JSON is an input problem, not a crash.
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
