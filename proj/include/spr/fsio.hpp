#pragma once

#include <string>

#include "spr/common.hpp"

namespace spr {

std::string read_file(const std::string& path);

/// Write to `<path>.tmp` then rename, so reruns overwrite atomically and a
/// crash never leaves a half-written artifact.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace spr
