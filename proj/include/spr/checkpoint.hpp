#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "spr/network.hpp"

namespace spr {

// Checkpoint container: magic "SPRC", format version 1 as u32 little-endian,
// a UTF-8 JSON header (layer kinds, shapes, hyperparameters, payload offset),
// then every parameter as IEEE-754 float32 little-endian in global-index
// order. Parameters are computed in float64 and rounded to float32 on save.

struct LoadedCheckpoint {
    Network net;
    nlohmann::json header;
};

/// `extra` is stored in the header under "extra" (run hyperparameters,
/// partition, prune mask, ...). Write is atomic (temp file + rename).
void save_checkpoint(const std::string& path, const Network& net,
                     const nlohmann::json& extra = nlohmann::json::object());

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace spr
