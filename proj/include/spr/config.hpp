// Flat, typed key-value configuration with sections. Every key is optional
// and carries a documented default; unknown keys are errors; environment
// variables with the SPR_ prefix override file values (SPR_PHASE1_EPOCHS
// overrides phase1.epochs). Runs write the fully-resolved config back to
// disk as provenance.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spr/dataio.hpp"
#include "spr/network.hpp"
#include "spr/pipeline.hpp"

namespace spr {

struct ToolConfig {
    // [run]
    std::string out_dir = "out";
    int threads = 1;
    std::uint64_t seed = 1;
    std::string mode = "two_phase";  // baseline | phase1 | two_phase

    // [data]
    std::string data_kind = "tiny_images";  // blobs|moons|rings|tiny_images|idx|sprd
    int train_n = 512;
    int test_n = 256;
    int classes = 4;
    double noise = 0.15;
    bool normalize_data = true;
    std::string idx_images;
    std::string idx_labels;
    std::string idx_test_images;
    std::string idx_test_labels;
    std::string sprd_train;
    std::string sprd_test;
    std::string augment = "none";  // none | crop_flip
    int augment_pad = 1;

    // [model]
    std::string arch = "convnet_s";  // mlp | convnet_s
    std::vector<int> hidden = {32, 16};
    int c1 = 8;
    int c2 = 16;

    // [spr]
    double lambda = 1.0;
    double alpha = 0.3;
    std::string reg = "spr";  // none|spr|l2|l1|group_lasso

    // [partition]
    bool conv_filters = true;
    bool dense_rows = false;

    // [prune]
    double weight_tol = 1e-4;
    double entity_frac = 0.99;
    std::string prune_rule = "frac_below";  // frac_below | max_abs_below
    bool degenerate_ok = false;

    // [phase1]
    int phase1_epochs = 60;
    int phase1_batch_size = 32;
    double phase1_lr0 = 0.05;
    std::vector<int> phase1_lr_milestones = {24, 40, 46, 50};
    double phase1_lr_factor = 0.1;
    double phase1_momentum = 0.9;

    // [phase2] (lr0 < 0 means phase1.lr0 / 10)
    int phase2_epochs = 30;
    int phase2_batch_size = 32;
    double phase2_lr0 = -1.0;
    std::vector<int> phase2_lr_milestones = {8, 15, 23};
    double phase2_lr_factor = 0.1;
    double phase2_momentum = 0.9;

    // [relax]
    int relax_count = 200;
    double relax_tol = 1e-6;
    std::string relax_instance;  // optional instance JSON; overrides the batch

    // [grid]
    std::vector<double> grid_lambdas = {0.1, 0.5, 2.0};
    std::vector<double> grid_alphas = {0.1, 0.3, 0.7};

    // [bench]
    int bench_epochs = 5;

    /// Cross-cutting sanity: enum-valued strings, threads, counts.
    void validate() const;
};

/// Parses config text. `origin` names the source in error messages.
ToolConfig parse_config(const std::string& text, const std::string& origin = "<config>");

/// Read file, apply SPR_* environment overrides, resolve derived defaults,
/// validate. A missing file is a ConfigError naming the path.
ToolConfig load_config(const std::string& path);

/// Applies SPR_SECTION_KEY environment overrides in schema order.
void apply_env_overrides(ToolConfig& cfg);

/// Resolves deferred defaults (currently phase2.lr0 < 0 -> phase1.lr0/10).
void finalize_config(ToolConfig& cfg);

/// Every key with its resolved value and help comment, grouped by section.
/// parse_config(resolved_config_text(c)) reproduces c exactly.
std::string resolved_config_text(const ToolConfig& cfg);

/// Train and test datasets per [data], normalized with train-split stats
/// when requested; synthetic test data uses an independent sub-seed.
std::pair<Dataset, Dataset> build_datasets(const ToolConfig& cfg);

/// Uninitialized architecture per [model]; shapes taken from the dataset.
/// mlp requires 2-D point data, convnet_s requires image data.
Network build_model(const ToolConfig& cfg, const Dataset& train);

/// TrainConfigs for both phases plus partition policy and prune thresholds.
/// The fine-tune phase reuses the root seed through a "finetune" sub-stream.
PipelineConfig build_pipeline_config(const ToolConfig& cfg);

AugmentPolicy augment_policy_from_name(const std::string& name);
PruneRule prune_rule_from_name(const std::string& name);

}  // namespace spr
