// Two-phase training orchestration: regularized phase-1 training, the
// pruning step, ell2 fine-tuning of the survivors, evaluation, and the
// hyperparameter grid driver.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spr/dataio.hpp"
#include "spr/groups.hpp"
#include "spr/network.hpp"
#include "spr/penalty.hpp"

namespace spr {

enum class Phase { baseline, spr, finetune };
std::string phase_name(Phase p);
Phase phase_from_name(const std::string& name);

enum class RegKind { none, spr, l2, l1, group_lasso };
std::string reg_kind_name(RegKind k);
RegKind reg_kind_from_name(const std::string& name);

struct TrainConfig {
    Phase phase = Phase::spr;
    int epochs = 60;
    int batch_size = 32;
    double lr0 = 0.05;
    std::vector<int> lr_milestones;  // 1-based epochs at which lr *= lr_factor
    double lr_factor = 0.1;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    RegKind reg = RegKind::spr;
    SprParams spr;  // lambda and alpha; phase-2 uses lambda*alpha as the ell2 weight
    AugmentPolicy augment = AugmentPolicy::none;
    int augment_pad = 1;
    std::string out_dir;  // checkpoints and divergence dumps; empty writes nothing

    void validate() const;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;  // mean minibatch objective (data loss + penalty)
    double train_acc = 0.0;
    double test_acc = 0.0;
    double penalty = 0.0;   // mean penalty term alone
    double seconds = 0.0;   // wall time of the minibatch loop only
};

struct RunRecord {
    std::vector<EpochStats> epochs;
    double final_train_acc = 0.0;
    double final_test_acc = 0.0;
    std::vector<std::string> checkpoint_paths;
};

nlohmann::json run_record_to_json(const RunRecord& rec);

// Phase-1 training: minibatch SGD on data loss + the configured regularizer
// (the weighted SPR aggregate by default). lambda = 0 skips the penalty code
// entirely, so such a run is bit-identical to a baseline run.
RunRecord train_phase1(Network& net, const EntityPartition& part, const Dataset& train,
                       const Dataset& test, const TrainConfig& cfg);

// Plain training (no SPR); `part` is only consulted for the group-lasso
// comparison regularizer and may be null otherwise.
RunRecord train_baseline(Network& net, const Dataset& train, const Dataset& test,
                         const TrainConfig& cfg, const EntityPartition* part = nullptr);

// Applies the pruning rule and freezes the losers. Throws
// DegeneratePruningError when everything would be pruned, unless
// degenerate_ok downgrades that to a stderr warning.
std::pair<PruneMask, PruneReport> prune_step(Network& net, const EntityPartition& part,
                                             double weight_tol = 1e-4,
                                             double entity_frac = 0.99,
                                             PruneRule rule = PruneRule::frac_below,
                                             bool degenerate_ok = false);

// Fine-tuning: SGD on data loss + a plain lambda*alpha*||w||^2 over every
// parameter. Asserts the mask is already applied (weights zero and frozen)
// and never re-initializes anything.
RunRecord train_phase2(Network& net, const PruneMask& mask, const Dataset& train,
                       const Dataset& test, const TrainConfig& cfg);

// Top-1 / top-k accuracy in percent. Score ties resolve to the lowest class
// index, so results are deterministic.
double evaluate(const Network& net, const Dataset& ds);
double evaluate_topk(const Network& net, const Dataset& ds, int k);

struct PipelineConfig {
    TrainConfig phase1;  // phase must be spr
    TrainConfig phase2;  // phase must be finetune
    double weight_tol = 1e-4;
    double entity_frac = 0.99;
    PruneRule rule = PruneRule::frac_below;
    bool degenerate_ok = false;
    PartitionPolicy policy;
};

struct PipelineResult {
    RunRecord phase1;
    RunRecord phase2;
    PruneReport report;
    double acc_after_phase1 = 0.0;
    double acc_after_prune = 0.0;
    double acc_final = 0.0;
    Network net;
};

// Full train -> prune -> fine-tune pipeline. `init_net` is the starting
// point (already initialized); `reference` supplies the per-layer bounds M
// and must share the architecture.
PipelineResult run_two_phase(const Network& init_net, const Network& reference,
                             const Dataset& train, const Dataset& test,
                             const PipelineConfig& cfg);

struct GridCell {
    double lambda = 0.0;
    double alpha = 0.0;
    double lr0 = 0.0;
    bool ok = false;
    std::string error;
    double acc_after_prune = 0.0;
    double acc_final = 0.0;
    std::size_t pruned_params = 0;
    double pruned_pct = 0.0;
};

struct GridOutcome {
    double baseline_acc = 0.0;
    std::vector<GridCell> cells;  // sorted by pruned_pct descending
};

// Trains one shared baseline (for bounds and the reference accuracy), then
// runs the two-phase pipeline per (lambda, alpha) cell, every cell from the
// same initialization and seed. Cell failures are recorded, not fatal.
GridOutcome grid_search(const std::vector<double>& lambdas,
                        const std::vector<double>& alphas, const Network& proto,
                        const Dataset& train, const Dataset& test,
                        const PipelineConfig& base_cfg, int threads = 1);

std::string grid_csv(const GridOutcome& outcome);

}  // namespace spr
