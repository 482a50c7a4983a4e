#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "estan/metrics.hpp"
#include "estan/png_io.hpp"
#include "estan/rng.hpp"
#include "estan/tensor.hpp"

namespace estan::io {

struct ManifestRecord {
    std::string image_id;
    std::string image_path;  // resolved (absolute or manifest-relative)
    std::string mask_path;
    int original_h = 0;
    int original_w = 0;
};

struct DatasetManifest {
    std::string dir;  // directory the manifest file lives in
    std::vector<ManifestRecord> records;
};

/// Parses a manifest CSV (header image_id,image_path,mask_path), resolves
/// paths against the manifest's directory, and reads each image's dims from
/// its PNG header. Duplicate ids and unreadable files are errors.
DatasetManifest load_manifest(const std::string& path);

void save_manifest(const DatasetManifest& manifest, const std::string& path);

/// One loaded record: image in [0,1] and mask resized to the working grid,
/// plus the untouched original-resolution mask for tumor-size measurement.
struct Sample {
    std::string id;
    Tensor4<float> image;  // (1, 1, hw, hw), bilinear
    Tensor4<float> mask;   // (1, 1, hw, hw), binary, nearest-neighbor
    metrics::BinaryMask original_mask;
};

Sample load_sample(const ManifestRecord& record, int input_hw);

/// Loads every record; records whose original mask is empty are skipped
/// unless include_empty is set (their ids are returned in skipped).
std::vector<Sample> load_all_samples(const DatasetManifest& manifest, int input_hw,
                                     bool include_empty = false,
                                     std::vector<std::string>* skipped = nullptr);

Tensor4<float> resize_bilinear(const Tensor4<float>& src, int out_h, int out_w);
metrics::BinaryMask resize_nearest(const metrics::BinaryMask& src, int out_h, int out_w);

Tensor4<float> image_to_tensor(const GrayImage& img);            // /255 into [0,1]
GrayImage prob_to_image(const Tensor4<float>& prob);             // round(255*p)
GrayImage mask_to_image(const metrics::BinaryMask& mask);        // 0 / 255
metrics::BinaryMask tensor_to_mask(const Tensor4<float>& mask);  // nonzero -> 1

struct FoldSplit {
    int k = 0;
    uint64_t seed = 0;
    std::vector<std::vector<size_t>> folds;
};

/// Seeded shuffle then round-robin: deterministic, sizes differ by at most
/// one, and the folds partition 0..n-1 exactly.
FoldSplit kfold_split(size_t n, int k, uint64_t seed);

/// Indices of all records outside the held-out fold, ascending.
std::vector<size_t> train_indices(const FoldSplit& split, int held_out_fold);

/// Writes `count` synthetic image/mask pairs into out_dir — a dark ellipse
/// on a brighter background under multiplicative speckle, with the exact
/// ellipse interior as mask — plus a manifest.csv referencing them.
DatasetManifest synth_generate(int count, int hw, uint64_t seed,
                               const std::string& out_dir);

// Synthetic generator ranges (fractions of the image side for geometry).
inline constexpr double kSynthBgLo = 0.55, kSynthBgHi = 0.75;
inline constexpr double kSynthFgLo = 0.15, kSynthFgHi = 0.35;
inline constexpr double kSynthSemiAxisLo = 0.12, kSynthSemiAxisHi = 0.30;
inline constexpr double kSynthCenterLo = 0.35, kSynthCenterHi = 0.65;
inline constexpr double kSynthSpeckle = 0.4;  // noise factor 1 + s*(u - 0.5)

}  // namespace estan::io
