#include "spr/groups.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spr {

namespace {

bool layer_prunable(const Network& net, std::size_t li, const PartitionPolicy& policy) {
    const Layer& l = net.layers[li];
    if (l.kind == LayerKind::conv2d) return policy.conv_filters;
    if (l.kind == LayerKind::dense && policy.dense_rows) {
        // The final classifier layer is never prunable: removing its rows
        // would change the output dimension.
        for (std::size_t k = li + 1; k < net.layers.size(); ++k)
            if (net.layers[k].has_params()) return true;
        return false;
    }
    return false;
}

}  // namespace

EntityPartition build_filter_partition(const Network& net, const PartitionPolicy& policy) {
    EntityPartition part;
    std::vector<ParamSlot> slots = net.param_layout();
    int next_id = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (!layer_prunable(net, li, policy)) continue;
        const Layer& l = net.layers[li];
        std::size_t row = l.kind == LayerKind::conv2d
                              ? static_cast<std::size_t>(l.in_ch) * l.kernel * l.kernel
                              : static_cast<std::size_t>(l.in_ch);
        for (int f = 0; f < l.out_ch; ++f) {
            Entity e;
            e.id = next_id++;
            e.layer_id = static_cast<int>(li);
            e.weight_indices.resize(row);
            std::size_t base = slots[li].weight_offset + static_cast<std::size_t>(f) * row;
            for (std::size_t j = 0; j < row; ++j) e.weight_indices[j] = base + j;
            e.u = row;
            part.entities.push_back(std::move(e));
        }
    }
    require(!part.entities.empty(),
            "network has no prunable layers under the current partition policy");
    return part;
}

std::map<int, double> estimate_layer_bounds(const Network& reference,
                                            const PartitionPolicy& policy) {
    std::map<int, double> bounds;
    for (std::size_t li = 0; li < reference.layers.size(); ++li) {
        if (!layer_prunable(reference, li, policy)) continue;
        const Layer& l = reference.layers[li];
        double mx = 0.0;
        for (double w : l.weights.data) mx = std::max(mx, std::abs(w));
        require(mx > 0.0, "degenerate reference: layer " + std::to_string(li) +
                              " is all zero, no usable bound");
        bounds[static_cast<int>(li)] = mx;
    }
    require(!bounds.empty(), "reference network has no prunable layers");
    return bounds;
}

void assign_bounds(EntityPartition& part, const std::map<int, double>& layer_bounds) {
    for (Entity& e : part.entities) {
        auto it = layer_bounds.find(e.layer_id);
        require(it != layer_bounds.end(),
                "no bound for layer " + std::to_string(e.layer_id));
        require(it->second > 0.0, "bound must be positive");
        e.M = it->second;
    }
}

PruneMask decide_pruning(const Network& net, const EntityPartition& part,
                         double weight_tol, double entity_frac, PruneRule rule) {
    require(weight_tol > 0.0, "weight_tol must be positive");
    require(entity_frac > 0.0 && entity_frac <= 1.0, "entity_frac must be in (0,1]");

    std::vector<double> flat = get_params(net);
    std::vector<ParamSlot> slots = net.param_layout();
    PruneMask mask;
    mask.weight_tol = weight_tol;
    mask.entity_frac = entity_frac;
    mask.entity_pruned.assign(part.entities.size(), 0);

    for (std::size_t ei = 0; ei < part.entities.size(); ++ei) {
        const Entity& e = part.entities[ei];
        std::size_t below = 0;
        double max_abs = 0.0;
        for (std::size_t j : e.weight_indices) {
            double a = std::abs(flat[j]);
            if (a < weight_tol) ++below;  // strict: exactly tol counts as kept
            max_abs = std::max(max_abs, a);
        }
        bool pruned = rule == PruneRule::frac_below
                          ? static_cast<double>(below) / static_cast<double>(e.u) >
                                entity_frac  // strict: frac == threshold keeps
                          : max_abs < weight_tol;
        if (!pruned) continue;
        mask.entity_pruned[ei] = 1;
        for (std::size_t j : e.weight_indices) mask.zero_indices.push_back(j);
        // A pruned output channel takes its bias entry with it.
        const ParamSlot& slot = slots[e.layer_id];
        if (slot.bias_count > 0) {
            std::size_t row = e.u;
            std::size_t channel = (e.weight_indices.front() - slot.weight_offset) / row;
            mask.zero_indices.push_back(slot.bias_offset + channel);
        }
    }
    std::sort(mask.zero_indices.begin(), mask.zero_indices.end());
    return mask;
}

void apply_mask(Network& net, const PruneMask& mask) {
    std::size_t n = net.param_count();
    std::vector<double> flat = get_params(net);
    if (net.frozen.empty()) net.frozen.assign(n, 0);
    require(net.frozen.size() == n, "frozen mask size mismatch");
    for (std::size_t j : mask.zero_indices) {
        require(j < n, "prune mask index out of range");
        flat[j] = 0.0;
        net.frozen[j] = 1;
    }
    set_params(net, flat);
}

PruneReport make_report(const Network& net, const EntityPartition& part,
                        const PruneMask& mask, const ReportMetrics& metrics) {
    require(mask.entity_pruned.size() == part.entities.size(),
            "mask does not match partition");
    std::vector<double> flat = get_params(net);
    PruneReport rep;
    rep.accuracy_before = metrics.accuracy_before;
    rep.accuracy_after = metrics.accuracy_after;
    for (std::size_t ei = 0; ei < part.entities.size(); ++ei) {
        const Entity& e = part.entities[ei];
        PruneReportRow row;
        row.entity_id = e.id;
        row.layer_id = e.layer_id;
        row.u = e.u;
        std::size_t below = 0;
        for (std::size_t j : e.weight_indices) {
            double a = std::abs(flat[j]);
            row.max_abs = std::max(row.max_abs, a);
            if (a < mask.weight_tol) ++below;
        }
        row.frac_below = static_cast<double>(below) / static_cast<double>(e.u);
        row.pruned = mask.entity_pruned[ei] != 0;
        if (row.pruned) rep.pruned_params += e.u;
        rep.rows.push_back(row);
    }
    rep.total_prunable = part.total_prunable();
    rep.pruned_pct = rep.total_prunable == 0
                         ? 0.0
                         : 100.0 * static_cast<double>(rep.pruned_params) /
                               static_cast<double>(rep.total_prunable);
    return rep;
}

std::string report_csv(const PruneReport& report) {
    std::ostringstream out;
    out << "# schema=spr.prune_report.v1\n";
    out << "entity_id,layer,u,max_abs,frac_below,verdict\n";
    out.precision(17);
    for (const auto& r : report.rows)
        out << r.entity_id << ',' << r.layer_id << ',' << r.u << ',' << r.max_abs << ','
            << r.frac_below << ',' << (r.pruned ? "pruned" : "kept") << '\n';
    return out.str();
}

nlohmann::json report_to_json(const PruneReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["pruned_params"] = report.pruned_params;
    j["total_prunable"] = report.total_prunable;
    j["pruned_pct"] = report.pruned_pct;
    if (report.accuracy_before >= 0.0) j["accuracy_before"] = report.accuracy_before;
    if (report.accuracy_after >= 0.0) j["accuracy_after"] = report.accuracy_after;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows)
        j["rows"].push_back({{"entity_id", r.entity_id},
                             {"layer", r.layer_id},
                             {"u", r.u},
                             {"max_abs", r.max_abs},
                             {"frac_below", r.frac_below},
                             {"verdict", r.pruned ? "pruned" : "kept"}});
    return j;
}

nlohmann::json partition_to_json(const EntityPartition& part) {
    nlohmann::json j = nlohmann::json::array();
    for (const Entity& e : part.entities)
        j.push_back({{"id", e.id},
                     {"layer", e.layer_id},
                     {"indices", e.weight_indices},
                     {"M", e.M}});
    return j;
}

EntityPartition partition_from_json(const nlohmann::json& j) {
    EntityPartition part;
    for (const auto& ej : j) {
        Entity e;
        e.id = ej.at("id").get<int>();
        e.layer_id = ej.at("layer").get<int>();
        e.weight_indices = ej.at("indices").get<std::vector<std::size_t>>();
        e.u = e.weight_indices.size();
        e.M = ej.at("M").get<double>();
        part.entities.push_back(std::move(e));
    }
    return part;
}

nlohmann::json mask_to_json(const PruneMask& mask) {
    nlohmann::json j;
    j["entity_pruned"] = mask.entity_pruned;
    j["zero_indices"] = mask.zero_indices;
    j["weight_tol"] = mask.weight_tol;
    j["entity_frac"] = mask.entity_frac;
    return j;
}

PruneMask mask_from_json(const nlohmann::json& j) {
    PruneMask mask;
    mask.entity_pruned = j.at("entity_pruned").get<std::vector<std::uint8_t>>();
    mask.zero_indices = j.at("zero_indices").get<std::vector<std::size_t>>();
    mask.weight_tol = j.at("weight_tol").get<double>();
    mask.entity_frac = j.at("entity_frac").get<double>();
    return mask;
}

}  // namespace spr
