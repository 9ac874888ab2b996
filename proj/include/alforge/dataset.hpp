#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alforge/tensor.hpp"

namespace alforge {

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetSpec {
    int n_train = 200;
    int n_test = 50;
    int image_size = 64;
    int min_polyps = 1;
    int max_polyps = 3;
    double contrast_min = 0.08;   // low offset = hard sample
    double contrast_max = 0.6;
    double noise_amplitude = 0.03;
    uint64_t seed = 0;

    bool operator==(const DatasetSpec&) const = default;
};

void validate(const DatasetSpec& spec);

struct Sample {
    int sample_id = 0;
    Tensor image;                // [3,S,S] in [0,1]
    std::vector<uint8_t> mask;   // S*S, ground truth; revealed only via the oracle
};

struct Dataset {
    DatasetSpec spec;
    std::vector<Sample> train;
    std::vector<Sample> test;   // ids continue after train ids
};

// Fully deterministic in spec; train and test draw from disjoint
// sub-seeds. Mask foreground fraction is rejection-sampled into
// [0.005, 0.5].
Dataset generate_dataset(const DatasetSpec& spec);

// Stand-in for the human expert: reveals ground truth for train ids only.
class OracleAnnotator {
public:
    explicit OracleAnnotator(const Dataset& ds) : ds_(&ds) {}
    const std::vector<uint8_t>& annotate(int sample_id) const;

private:
    const Dataset* ds_;
};

// Directory layout: manifest.json + images.bin (LE float64) +
// masks.bin (one byte per pixel), train then test, with FNV-1a64
// checksums in the manifest. See docs/formats.md.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);
std::string fnv1a64_hex(const void* data, size_t n);

// JSON form used by spec files and manifests. Fields absent from the
// JSON keep their defaults; *had_seed reports whether "seed" was given.
DatasetSpec dataset_spec_from_json_string(const std::string& text, bool* had_seed = nullptr);
std::string dataset_spec_to_json_string(const DatasetSpec& spec);

}  // namespace alforge
