// Dataset generation and ingestion: synthetic classification tasks for fast
// property tests, IDX image files for small real-data runs, normalization,
// and crop/flip augmentation.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spr/common.hpp"
#include "spr/tensor.hpp"

namespace spr {

enum class Split { train, test };

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at 1e-8
};

struct Dataset {
    Tensor inputs;  // (n, C, H, W) for images, (n, d) for point clouds
    std::vector<int> labels;
    int classes = 0;
    Split split = Split::train;
    bool normalized = false;
    NormStats stats;  // the stats the data was normalized with

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

enum class SyntheticKind { blobs, moons, rings, tiny_images };

SyntheticKind synthetic_kind_from_name(const std::string& name);
std::string synthetic_kind_name(SyntheticKind k);

// Deterministic per seed. Labels are assigned round-robin, so class counts
// are balanced within one. blobs/rings are 2-D point clouds for any class
// count; moons is strictly two-class; tiny_images yields 1x8x8 images built
// from per-class planted patterns (bars keyed by (seed, class)) plus noise,
// so conv filters have real structure to find. The class structure depends
// only on the seed; the sample noise stream is keyed by (seed, split), so a
// train/test pair generated from one seed shares its patterns but never a
// sample.
Dataset gen_synthetic(SyntheticKind kind, int n, int classes, double noise,
                      std::uint64_t seed, Split split = Split::train);

// Big-endian IDX containers (images magic 0x00000803, labels 0x00000801).
// Pixels are uint8 scaled to [0,1] on load and rescaled on save, so a
// load/save round trip reproduces the original bytes.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path);

// Per-channel (x - mean) / std. Stats come from the train split only; the
// test split must be transformed with apply_stats using those stats.
NormStats compute_stats(const Dataset& ds);
Dataset apply_stats(const Dataset& ds, const NormStats& stats);
Dataset normalize(const Dataset& ds, NormStats* out_stats = nullptr);

enum class AugmentPolicy { none, crop_flip };

Tensor flip_horizontal(const Tensor& batch);  // involution, used by augment

// Zero-pad by `pad`, random crop back to the original size, then flip each
// image with probability 1/2. The random stream is keyed by
// (seed, epoch, batch_index) so prefetch order can never perturb results.
Tensor augment(const Tensor& batch, AugmentPolicy policy, int pad,
               std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch_index);

// Flat binary dump ("SPRD"): counts and shape in the header, then float64
// little-endian inputs followed by int32 labels.
void save_sprd(const std::string& path, const Dataset& ds);
Dataset load_sprd(const std::string& path);

}  // namespace spr
