#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "extend3d/priors.hpp"

namespace extend3d {

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<std::array<std::uint8_t, 3>> colors;  // empty, or one per point
};

/// ASCII PLY with an "element vertex" block carrying x/y/z float properties
/// and optional red/green/blue uchar. Other elements are skipped.
PointCloud parse_ply(std::string_view text);
PointCloud read_ply(const std::string& path);

/// "ply", "format ascii 1.0", element/property lines, "end_header", then one
/// vertex per line. Coordinates use shortest round-trip formatting.
std::string format_ply(const PointCloud& cloud);
void write_ply(const std::string& path, const PointCloud& cloud);

}  // namespace extend3d
