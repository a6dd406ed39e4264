#pragma once

#include "vitac/cloud.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace vitac {

/// Text cloud format:
///   #modality: visual|tactile
///   #label: <id>              (optional)
///   #sensor_origin: x y z     (optional)
///   x y z                     (one point per line, meters)
/// Lines end in LF; numbers use the shortest round-trip representation.
std::string format_cloud(const PointCloud& cloud);
PointCloud parse_cloud(std::string_view text);

PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace vitac
