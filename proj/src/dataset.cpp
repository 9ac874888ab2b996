#include "alforge/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "alforge/rng.hpp"

namespace alforge {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const DatasetSpec& spec) {
    std::string bad;
    auto flag = [&bad](const char* field) {
        if (!bad.empty()) bad += ", ";
        bad += field;
    };
    if (spec.n_train < 1) flag("n_train");
    if (spec.n_test < 1) flag("n_test");
    if (spec.image_size < 8 || spec.image_size % 4 != 0) flag("image_size");
    if (spec.min_polyps < 1 || spec.max_polyps < spec.min_polyps) flag("polyps_per_image");
    if (spec.contrast_min <= 0.0 || spec.contrast_max > 1.0 || spec.contrast_max < spec.contrast_min)
        flag("contrast_range");
    if (spec.noise_amplitude < 0.0) flag("noise_amplitude");
    if (!bad.empty()) throw ValidationError("invalid DatasetSpec fields: " + bad);
}

namespace {

constexpr double kMinMaskFraction = 0.005;
constexpr double kMaxMaskFraction = 0.5;

Sample generate_sample(const DatasetSpec& spec, const char* split, int index, int sample_id) {
    Rng rng = Rng::derive(spec.seed, split, static_cast<uint64_t>(index));
    const int s = spec.image_size;
    const int64_t npx = int64_t(s) * s;

    // Smooth background: sum of 8 random-frequency sinusoids.
    struct Wave { double amp, fx, fy, phase; };
    std::vector<Wave> waves;
    double amp_total = 0.0;
    for (int k = 0; k < 8; ++k) {
        Wave w;
        w.amp = rng.uniform(0.5, 1.0);
        w.fx = rng.uniform(0.5, 4.0) / s;
        w.fy = rng.uniform(0.5, 4.0) / s;
        w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        amp_total += w.amp;
        waves.push_back(w);
    }
    std::vector<double> field(static_cast<size_t>(npx));
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            double v = 0.0;
            for (const auto& w : waves)
                v += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
            field[static_cast<size_t>(y) * s + x] = v / amp_total;  // in [-1,1]
        }

    double ch_gain[3];
    for (double& g : ch_gain) g = rng.uniform(0.9, 1.1);

    Sample sample;
    sample.sample_id = sample_id;
    sample.image = Tensor::zeros({3, s, s});
    for (int c = 0; c < 3; ++c)
        for (int64_t i = 0; i < npx; ++i)
            sample.image.data()[c * npx + i] =
                0.35 + 0.18 * ch_gain[c] * field[static_cast<size_t>(i)] +
                spec.noise_amplitude * rng.uniform(-1.0, 1.0);

    // Rotated-ellipse polyps, rejection-sampled on the mask fraction.
    struct Ellipse { double cx, cy, rx, ry, ang, offset; };
    std::vector<Ellipse> polyps;
    sample.mask.assign(static_cast<size_t>(npx), 0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        polyps.clear();
        const int np = spec.min_polyps +
                       static_cast<int>(rng.below(static_cast<uint64_t>(spec.max_polyps - spec.min_polyps + 1)));
        for (int p = 0; p < np; ++p) {
            Ellipse e;
            e.cx = rng.uniform(0.15, 0.85) * s;
            e.cy = rng.uniform(0.15, 0.85) * s;
            e.rx = rng.uniform(0.06, 0.20) * s;
            e.ry = rng.uniform(0.06, 0.20) * s;
            e.ang = rng.uniform(0.0, std::numbers::pi);
            e.offset = rng.uniform(spec.contrast_min, spec.contrast_max);
            polyps.push_back(e);
        }
        std::fill(sample.mask.begin(), sample.mask.end(), 0);
        int64_t fg = 0;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                for (const auto& e : polyps) {
                    const double dx = x - e.cx, dy = y - e.cy;
                    const double u = std::cos(e.ang) * dx + std::sin(e.ang) * dy;
                    const double v = -std::sin(e.ang) * dx + std::cos(e.ang) * dy;
                    if (u * u / (e.rx * e.rx) + v * v / (e.ry * e.ry) <= 1.0) {
                        if (!sample.mask[static_cast<size_t>(y) * s + x]) ++fg;
                        sample.mask[static_cast<size_t>(y) * s + x] = 1;
                    }
                }
        const double frac = static_cast<double>(fg) / static_cast<double>(npx);
        if (frac >= kMinMaskFraction && frac <= kMaxMaskFraction) break;
        polyps.clear();
    }
    if (polyps.empty()) throw std::runtime_error("generate_sample: mask fraction rejection did not converge");

    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
            for (const auto& e : polyps) {
                const double dx = x - e.cx, dy = y - e.cy;
                const double u = std::cos(e.ang) * dx + std::sin(e.ang) * dy;
                const double v = -std::sin(e.ang) * dx + std::cos(e.ang) * dy;
                if (u * u / (e.rx * e.rx) + v * v / (e.ry * e.ry) <= 1.0)
                    for (int c = 0; c < 3; ++c)
                        sample.image.data()[c * npx + static_cast<size_t>(y) * s + x] += e.offset;
            }
    for (int64_t i = 0; i < 3 * npx; ++i)
        sample.image.data()[i] = std::min(1.0, std::max(0.0, sample.image.data()[i]));
    return sample;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
    validate(spec);
    Dataset ds;
    ds.spec = spec;
    for (int i = 0; i < spec.n_train; ++i) ds.train.push_back(generate_sample(spec, "train", i, i));
    for (int i = 0; i < spec.n_test; ++i)
        ds.test.push_back(generate_sample(spec, "test", i, spec.n_train + i));
    return ds;
}

const std::vector<uint8_t>& OracleAnnotator::annotate(int sample_id) const {
    if (sample_id < 0 || sample_id >= static_cast<int>(ds_->train.size()))
        throw std::out_of_range("oracle_annotate: unknown or non-train sample id " +
                                std::to_string(sample_id));
    return ds_->train[static_cast<size_t>(sample_id)].mask;
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_hex(const void* data, size_t n) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(data, n)));
    return buf;
}

namespace {

constexpr int kManifestVersion = 1;

void append_sample(std::vector<double>& images, std::vector<uint8_t>& masks, const Sample& s) {
    images.insert(images.end(), s.image.vec().begin(), s.image.vec().end());
    masks.insert(masks.end(), s.mask.begin(), s.mask.end());
}

void write_file(const fs::path& p, const void* data, size_t n) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("save_dataset: write failed for " + p.string());
}

std::vector<char> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in) throw IntegrityError("load_dataset: cannot open " + p.string());
    const auto size = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<size_t>(size));
    in.read(buf.data(), size);
    if (!in) throw IntegrityError("load_dataset: read failed for " + p.string());
    return buf;
}

json spec_to_json(const DatasetSpec& s) {
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

DatasetSpec spec_from_json(const json& j) {
    DatasetSpec s;
    s.n_train = j.value("n_train", s.n_train);
    s.n_test = j.value("n_test", s.n_test);
    s.image_size = j.value("image_size", s.image_size);
    s.min_polyps = j.value("min_polyps", s.min_polyps);
    s.max_polyps = j.value("max_polyps", s.max_polyps);
    s.contrast_min = j.value("contrast_min", s.contrast_min);
    s.contrast_max = j.value("contrast_max", s.contrast_max);
    s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
    s.seed = j.value("seed", s.seed);
    return s;
}

}  // namespace

DatasetSpec dataset_spec_from_json_string(const std::string& text, bool* had_seed) {
    json j = json::parse(text);
    if (had_seed) *had_seed = j.contains("seed");
    return spec_from_json(j);
}

std::string dataset_spec_to_json_string(const DatasetSpec& spec) {
    return spec_to_json(spec).dump(2) + "\n";
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<double> images;
    std::vector<uint8_t> masks;
    for (const auto& s : ds.train) append_sample(images, masks, s);
    for (const auto& s : ds.test) append_sample(images, masks, s);

    json manifest;
    manifest["version"] = kManifestVersion;
    manifest["spec"] = spec_to_json(ds.spec);
    manifest["checksums"] = {
        {"images.bin", fnv1a64_hex(images.data(), images.size() * sizeof(double))},
        {"masks.bin", fnv1a64_hex(masks.data(), masks.size())}};

    write_file(fs::path(dir) / "images.bin", images.data(), images.size() * sizeof(double));
    write_file(fs::path(dir) / "masks.bin", masks.data(), masks.size());
    const std::string ms = manifest.dump(2) + "\n";
    write_file(fs::path(dir) / "manifest.json", ms.data(), ms.size());
}

Dataset load_dataset(const std::string& dir) {
    const auto mraw = read_file(fs::path(dir) / "manifest.json");
    json manifest = json::parse(mraw.begin(), mraw.end());
    if (manifest.at("version") != kManifestVersion)
        throw IntegrityError("load_dataset: unsupported manifest version " +
                             manifest.at("version").dump());

    Dataset ds;
    ds.spec = spec_from_json(manifest.at("spec"));
    const auto iraw = read_file(fs::path(dir) / "images.bin");
    const auto kraw = read_file(fs::path(dir) / "masks.bin");
    if (fnv1a64_hex(iraw.data(), iraw.size()) != manifest.at("checksums").at("images.bin"))
        throw IntegrityError("load_dataset: checksum mismatch in images.bin");
    if (fnv1a64_hex(kraw.data(), kraw.size()) != manifest.at("checksums").at("masks.bin"))
        throw IntegrityError("load_dataset: checksum mismatch in masks.bin");

    const int s = ds.spec.image_size;
    const int64_t npx = int64_t(s) * s;
    const int total = ds.spec.n_train + ds.spec.n_test;
    if (static_cast<int64_t>(iraw.size()) != total * 3 * npx * int64_t(sizeof(double)))
        throw IntegrityError("load_dataset: truncated images.bin");
    if (static_cast<int64_t>(kraw.size()) != total * npx)
        throw IntegrityError("load_dataset: truncated masks.bin");

    const double* ip = reinterpret_cast<const double*>(iraw.data());
    const uint8_t* kp = reinterpret_cast<const uint8_t*>(kraw.data());
    for (int i = 0; i < total; ++i) {
        Sample sample;
        sample.sample_id = i;
        sample.image = Tensor::from_data({3, s, s},
                                         std::vector<double>(ip + i * 3 * npx, ip + (i + 1) * 3 * npx));
        sample.mask.assign(kp + i * npx, kp + (i + 1) * npx);
        (i < ds.spec.n_train ? ds.train : ds.test).push_back(std::move(sample));
    }
    return ds;
}

}  // namespace alforge
