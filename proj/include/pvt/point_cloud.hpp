#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "pvt/matrix.hpp"

namespace pvt {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;
  std::optional<Matrix> features;  // N x D when present

  std::size_t size() const { return points.size(); }
  std::size_t feature_dim() const { return features ? features->cols() : 0; }

  // Copy with points (and features) reordered so that row i of the result is
  // row perm[i] of this cloud.
  PointCloud permuted(const std::vector<std::size_t>& perm) const;

  bool operator==(const PointCloud&) const = default;
};

enum class CloudFormat { XyzText, XyzdText, Binary };

// Accepts "xyz", "xyzd", "binary"/"bin"; throws ConfigError otherwise.
CloudFormat parse_cloud_format(std::string_view name);
// Guesses the format from the file extension (.bin -> binary, .xyzd ->
// xyzd-text, anything else -> xyz-text).
CloudFormat format_from_extension(const std::filesystem::path& path);

// Text formats: whitespace separated, one point per line, '#' starts a comment
// line, blank lines ignored. xyzd-text carries D trailing feature columns,
// with D fixed by the first data line.
//
// Binary format: "PVTC", u32 N, u32 D (little endian), then N rows of 3 + D
// little-endian f64 values.
PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format);
void save_point_cloud(const std::filesystem::path& path, const PointCloud& pc,
                      CloudFormat format);

// Centroid moved to the origin and the farthest point scaled to radius 1. A
// cloud whose points all coincide maps to all zeros.
PointCloud normalize_unit_sphere(const PointCloud& pc);

// Point order used for every reduction over the point axis: lexicographic by
// coordinates, then by feature row, then by index. It depends only on the
// multiset of (point, feature) pairs, which keeps sums bit-identical under any
// permutation of the input.
template <typename T>
std::vector<std::size_t> canonical_order(const std::vector<Point3>& points,
                                         const BasicMatrix<T>* features);

// Lexicographic order of matrix rows, ties by index.
template <typename T>
std::vector<std::size_t> canonical_row_order(const BasicMatrix<T>& rows);

// N points uniform in the unit ball, seeded.
PointCloud random_cloud(std::size_t n, std::uint64_t seed);

}  // namespace pvt
