#pragma once

#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "finecount/tensor.hpp"

namespace finecount {

// Map file layout: one JSON header line {"h": H, "w": W, "c": C} followed by
// '\n' and H*W*C little-endian float32 values, channel-major then row-major.
// Extra header keys (e.g. "name" in checkpoints) are allowed and preserved.

void write_map_record(std::ostream& os, const Tensor& map, nlohmann::json header = nlohmann::json::object());

/// Reads one record; the parsed header is returned through `header` if given.
Tensor read_map_record(std::istream& is, nlohmann::json* header = nullptr);

void write_map(const std::filesystem::path& path, const Tensor& map);
Tensor read_map(const std::filesystem::path& path);

}  // namespace finecount
