#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spr/network.hpp"

namespace spr {

/// One prunable entity: a disjoint group of weights removed or kept as a
/// unit. For conv layers an entity is one output filter (n_inp*k*k weights).
struct Entity {
    int id = 0;
    int layer_id = 0;
    std::vector<std::size_t> weight_indices;  // global indices, ascending
    std::size_t u = 0;                        // |weight_indices|
    double M = 1.0;                           // per-entity bound, copied from its layer
};

struct EntityPartition {
    std::vector<Entity> entities;

    std::size_t total_prunable() const {
        std::size_t n = 0;
        for (const auto& e : entities) n += e.u;
        return n;
    }
};

/// Which parameter groups are prunable. Filters of conv layers always are
/// when enabled; dense layers may be partitioned by output row, except the
/// final classifier layer, which is never prunable.
struct PartitionPolicy {
    bool conv_filters = true;
    bool dense_rows = false;
};

EntityPartition build_filter_partition(const Network& net, const PartitionPolicy& policy = {});

/// Per-layer M = max |w| over the layer's prunable weights in a reference
/// network of identical architecture. An all-zero layer is a degenerate
/// reference and an error.
std::map<int, double> estimate_layer_bounds(const Network& reference,
                                            const PartitionPolicy& policy = {});

void assign_bounds(EntityPartition& part, const std::map<int, double>& layer_bounds);

enum class PruneRule {
    frac_below,     // entity pruned iff (#weights with |w| < tol)/u > frac
    max_abs_below,  // entity pruned iff max|w| < tol
};

struct PruneMask {
    std::vector<std::uint8_t> entity_pruned;  // aligned with partition entities
    std::vector<std::size_t> zero_indices;    // global indices forced to exactly 0
    double weight_tol = 1e-4;
    double entity_frac = 0.99;

    std::size_t pruned_entity_count() const {
        std::size_t n = 0;
        for (auto v : entity_pruned) n += v != 0;
        return n;
    }
};

/// Strict thresholds: a weight counts as prunable iff |w| < weight_tol, an
/// entity is pruned iff prunable fraction > entity_frac. When an output
/// channel is pruned its bias entry is zeroed and frozen as well.
PruneMask decide_pruning(const Network& net, const EntityPartition& part,
                         double weight_tol, double entity_frac,
                         PruneRule rule = PruneRule::frac_below);

/// Zeroes every masked weight and freezes it so later gradients and SGD
/// updates leave it at exactly 0. Idempotent.
void apply_mask(Network& net, const PruneMask& mask);

struct PruneReportRow {
    int entity_id = 0;
    int layer_id = 0;
    std::size_t u = 0;
    double max_abs = 0.0;
    double frac_below = 0.0;
    bool pruned = false;
};

struct PruneReport {
    std::vector<PruneReportRow> rows;
    std::size_t pruned_params = 0;
    std::size_t total_prunable = 0;
    double pruned_pct = 0.0;  // exact; display rounds to 2 decimals
    double accuracy_before = -1.0;
    double accuracy_after = -1.0;
};

struct ReportMetrics {
    double accuracy_before = -1.0;
    double accuracy_after = -1.0;
};

PruneReport make_report(const Network& net, const EntityPartition& part,
                        const PruneMask& mask, const ReportMetrics& metrics = {});

std::string report_csv(const PruneReport& report);
nlohmann::json report_to_json(const PruneReport& report);

nlohmann::json partition_to_json(const EntityPartition& part);
EntityPartition partition_from_json(const nlohmann::json& j);
nlohmann::json mask_to_json(const PruneMask& mask);
PruneMask mask_from_json(const nlohmann::json& j);

}  // namespace spr
