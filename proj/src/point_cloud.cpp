#include "pvt/point_cloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "pvt/errors.hpp"
#include "pvt/rng.hpp"

namespace pvt {

namespace {

constexpr char kMagic[4] = {'P', 'V', 'T', 'C'};

static_assert(std::endian::native == std::endian::little,
              "binary cloud I/O assumes a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw IoError("binary cloud: truncated header");
  }
  return v;
}

PointCloud load_text(const std::filesystem::path& path, bool with_features) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  PointCloud pc;
  std::vector<double> feats;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> vals;
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v)) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": bad number '" + tok + "'",
                         lineno);
      }
      vals.push_back(v);
    }
    if (!with_features && vals.size() != 3) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                           ": expected 3 columns, got " +
                           std::to_string(vals.size()),
                       lineno);
    }
    if (with_features) {
      if (vals.size() < 3) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected at least 3 columns",
                         lineno);
      }
      if (!dim) dim = vals.size() - 3;
      if (vals.size() != 3 + *dim) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected " + std::to_string(3 + *dim) +
                             " columns, got " + std::to_string(vals.size()),
                         lineno);
      }
      feats.insert(feats.end(), vals.begin() + 3, vals.end());
    }
    pc.points.push_back({vals[0], vals[1], vals[2]});
  }
  if (pc.points.empty()) throw EmptyInputError(path.string() + ": no points");
  if (with_features && dim && *dim > 0) {
    pc.features = Matrix(pc.points.size(), *dim, std::move(feats));
  }
  return pc;
}

PointCloud load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a PVTC binary cloud");
  }
  const std::uint32_t n = read_u32(in);
  const std::uint32_t d = read_u32(in);
  if (n == 0) throw EmptyInputError(path.string() + ": no points");
  const std::size_t width = 3 + d;
  std::vector<double> raw(static_cast<std::size_t>(n) * width);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size() * sizeof(double)))) {
    throw IoError(path.string() + ": truncated payload");
  }
  PointCloud pc;
  pc.points.resize(n);
  if (d > 0) pc.features = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = raw.data() + i * width;
    pc.points[i] = {r[0], r[1], r[2]};
    for (std::size_t j = 0; j < d; ++j) (*pc.features)(i, j) = r[3 + j];
  }
  return pc;
}

}  // namespace

PointCloud PointCloud::permuted(const std::vector<std::size_t>& perm) const {
  PointCloud out;
  out.points.reserve(perm.size());
  for (std::size_t i : perm) out.points.push_back(points.at(i));
  if (features) {
    Matrix f(perm.size(), features->cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      std::ranges::copy(features->row(perm[i]), f.row(i).begin());
    }
    out.features = std::move(f);
  }
  return out;
}

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "xyz" || name == "xyz-text") return CloudFormat::XyzText;
  if (name == "xyzd" || name == "xyzd-text") return CloudFormat::XyzdText;
  if (name == "binary" || name == "bin") return CloudFormat::Binary;
  throw ConfigError("unknown cloud format '" + std::string(name) + "'");
}

CloudFormat format_from_extension(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".bin" || ext == ".pvtc") return CloudFormat::Binary;
  if (ext == ".xyzd") return CloudFormat::XyzdText;
  return CloudFormat::XyzText;
}

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format) {
  switch (format) {
    case CloudFormat::XyzText:
      return load_text(path, false);
    case CloudFormat::XyzdText:
      return load_text(path, true);
    case CloudFormat::Binary:
      return load_binary(path);
  }
  throw ConfigError("unknown cloud format");
}

void save_point_cloud(const std::filesystem::path& path, const PointCloud& pc,
                      CloudFormat format) {
  const std::size_t d = pc.feature_dim();
  if (format == CloudFormat::Binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(pc.size()));
    write_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < pc.size(); ++i) {
      for (double c : pc.points[i]) write_f64(out, c);
      for (std::size_t j = 0; j < d; ++j) write_f64(out, (*pc.features)(i, j));
    }
    if (!out) throw IoError("write failed: " + path.string());
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto& p = pc.points[i];
    out << p[0] << ' ' << p[1] << ' ' << p[2];
    if (format == CloudFormat::XyzdText) {
      for (std::size_t j = 0; j < d; ++j) out << ' ' << (*pc.features)(i, j);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PointCloud normalize_unit_sphere(const PointCloud& pc) {
  if (pc.points.empty()) throw EmptyInputError("normalize_unit_sphere: no points");
  Point3 centroid{0, 0, 0};
  for (const auto& p : pc.points) {
    for (int m = 0; m < 3; ++m) centroid[m] += p[m];
  }
  for (auto& c : centroid) c /= static_cast<double>(pc.size());
  PointCloud out = pc;
  double radius = 0;
  for (auto& p : out.points) {
    for (int m = 0; m < 3; ++m) p[m] -= centroid[m];
    radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  if (radius == 0) {
    for (auto& p : out.points) p = {0, 0, 0};
    return out;
  }
  for (auto& p : out.points) {
    for (auto& c : p) c /= radius;
  }
  return out;
}

template <typename T>
std::vector<std::size_t> canonical_order(const std::vector<Point3>& points,
                                         const BasicMatrix<T>* features) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a] != points[b]) return points[a] < points[b];
    if (features) {
      const auto ra = features->row(a);
      const auto rb = features->row(b);
      const auto c = std::lexicographical_compare_three_way(
          ra.begin(), ra.end(), rb.begin(), rb.end());
      if (c != 0) return c < 0;
    }
    return a < b;
  });
  return order;
}

template std::vector<std::size_t> canonical_order(const std::vector<Point3>&,
                                                  const BasicMatrix<float>*);
template std::vector<std::size_t> canonical_order(const std::vector<Point3>&,
                                                  const BasicMatrix<double>*);

template <typename T>
std::vector<std::size_t> canonical_row_order(const BasicMatrix<T>& rows) {
  std::vector<std::size_t> order(rows.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = rows.row(a);
    const auto rb = rows.row(b);
    const auto c = std::lexicographical_compare_three_way(ra.begin(), ra.end(),
                                                          rb.begin(), rb.end());
    if (c != 0) return c < 0;
    return a < b;
  });
  return order;
}

template std::vector<std::size_t> canonical_row_order(const BasicMatrix<float>&);
template std::vector<std::size_t> canonical_row_order(const BasicMatrix<double>&);

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud pc;
  pc.points.reserve(n);
  while (pc.points.size() < n) {
    Point3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0) pc.points.push_back(p);
  }
  return pc;
}

}  // namespace pvt
