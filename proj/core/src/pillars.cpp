#include "coopdet/pillars.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "coopdet/bytes.hpp"
#include "coopdet/rng.hpp"

namespace coopdet {

namespace {

int checked_cells(double range, double cell, const char* axis) {
  if (!(range > 0.0) || !(cell > 0.0))
    throw std::invalid_argument(std::string("grid ") + axis + " extent must be positive");
  const double n = range / cell;
  const int rounded = static_cast<int>(std::lround(n));
  if (rounded < 1 || std::fabs(rounded * cell - range) > 1e-6)
    throw std::invalid_argument(std::string("grid ") + axis +
                                " range must be an exact multiple of the cell size");
  return rounded;
}

}  // namespace

int PillarGrid::rows() const { return checked_cells(y_range, cell_y, "y"); }
int PillarGrid::cols() const { return checked_cells(x_range, cell_x, "x"); }

void PillarGrid::validate() const {
  rows();
  cols();
  if (!(z_range > 0.0))
    throw std::invalid_argument("grid z extent must be positive");
}

bool PillarGrid::contains(double x, double y, double z) const {
  return x >= x_min && x < x_min + x_range && y >= y_min && y < y_min + y_range &&
         z >= z_min && z < z_min + z_range;
}

std::array<int, 2> PillarGrid::cell_of(double x, double y) const {
  int col = static_cast<int>(std::floor((x - x_min) / cell_x));
  int row = static_cast<int>(std::floor((y - y_min) / cell_y));
  // Guard against points sitting right on the top boundary after rounding.
  col = std::min(col, cols() - 1);
  row = std::min(row, rows() - 1);
  return {row, col};
}

std::array<double, 2> PillarGrid::cell_center(int row, int col) const {
  return {x_min + (col + 0.5) * cell_x, y_min + (row + 0.5) * cell_y};
}

std::array<double, 9> augment_point(const LidarPoint& p, const Vec3& mean,
                                    const std::array<double, 2>& center_xy) {
  return {p.x, p.y, p.z, p.r,
          p.x - mean[0], p.y - mean[1], p.z - mean[2],
          p.x - center_xy[0], p.y - center_xy[1]};
}

namespace {

uint64_t f64_bits(double v) {
  uint64_t b;
  std::memcpy(&b, &v, 8);
  return b;
}

// Content hash of one point; used to give each cell's candidate list a
// canonical order that does not depend on how the input cloud was laid out.
uint64_t point_hash(const LidarPoint& p) {
  uint64_t h = splitmix64_mix(f64_bits(p.x));
  h = splitmix64_mix(h ^ f64_bits(p.y));
  h = splitmix64_mix(h ^ f64_bits(p.z));
  h = splitmix64_mix(h ^ f64_bits(p.r));
  return h;
}

bool point_less(const LidarPoint& a, const LidarPoint& b) {
  const uint64_t ha = point_hash(a), hb = point_hash(b);
  if (ha != hb) return ha < hb;
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  if (a.z != b.z) return a.z < b.z;
  return a.r < b.r;
}

}  // namespace

std::vector<Pillar> pillarize(const PointCloud& cloud, const PillarGrid& grid,
                              int omega, uint64_t seed) {
  grid.validate();
  if (omega < 1) throw std::invalid_argument("omega must be at least 1");
  const int cols = grid.cols();

  std::unordered_map<int64_t, std::vector<LidarPoint>> cells;
  for (const auto& p : cloud) {
    if (!grid.contains(p.x, p.y, p.z)) continue;
    const auto rc = grid.cell_of(p.x, p.y);
    cells[static_cast<int64_t>(rc[0]) * cols + rc[1]].push_back(p);
  }

  std::vector<int64_t> keys;
  keys.reserve(cells.size());
  for (const auto& kv : cells) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());

  const SplitMix64 root(seed);
  std::vector<Pillar> pillars;
  pillars.reserve(keys.size());
  for (const int64_t key : keys) {
    auto& pts = cells[key];
    std::sort(pts.begin(), pts.end(), point_less);
    const int n = static_cast<int>(pts.size());
    const int keep = std::min(n, omega);
    if (n > omega) {
      // Partial Fisher-Yates over the canonical order, one stream per cell.
      SplitMix64 rng = root.fork(static_cast<uint64_t>(key));
      for (int i = 0; i < keep; ++i) {
        const int j = i + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n - i)));
        std::swap(pts[i], pts[j]);
      }
    }

    Pillar pillar;
    pillar.row = static_cast<int>(key / cols);
    pillar.col = static_cast<int>(key % cols);
    pillar.count = keep;
    pillar.points.assign(static_cast<size_t>(omega) * 9, 0.0f);

    Vec3 mean{0.0, 0.0, 0.0};
    for (int i = 0; i < keep; ++i) {
      mean[0] += pts[i].x;
      mean[1] += pts[i].y;
      mean[2] += pts[i].z;
    }
    for (double& m : mean) m /= keep;
    const auto center = grid.cell_center(pillar.row, pillar.col);
    for (int i = 0; i < keep; ++i) {
      const auto f = augment_point(pts[i], mean, center);
      for (int k = 0; k < 9; ++k)
        pillar.points[static_cast<size_t>(i) * 9 + k] = static_cast<float>(f[k]);
    }
    pillars.push_back(std::move(pillar));
  }
  return pillars;
}

void SPointNetWeights::validate() const {
  if (channels < 1 || input_dim < 1)
    throw std::invalid_argument("encoder dimensions must be positive");
  const size_t c = static_cast<size_t>(channels);
  if (weight.size() != c * input_dim || bias.size() != c || bn_scale.size() != c ||
      bn_shift.size() != c || bn_mean.size() != c || bn_var.size() != c)
    throw std::invalid_argument("encoder weight shapes do not match channel count");
  for (float v : bn_var)
    if (!(v > 0.0f)) throw std::invalid_argument("batch norm variance must be positive");
}

SPointNetWeights seeded_spointnet_weights(int channels, int input_dim, uint64_t seed) {
  SPointNetWeights w;
  w.channels = channels;
  w.input_dim = input_dim;
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  w.weight.resize(static_cast<size_t>(channels) * input_dim);
  for (auto& v : w.weight) v = static_cast<float>(rng.uniform(-bound, bound));
  w.bias.resize(channels);
  for (auto& v : w.bias) v = static_cast<float>(rng.uniform(-bound, bound));
  w.bn_scale.assign(channels, 1.0f);
  w.bn_shift.assign(channels, 0.0f);
  w.bn_mean.assign(channels, 0.0f);
  w.bn_var.assign(channels, 1.0f);
  w.validate();
  return w;
}

PillarFeatures spointnet_forward(const std::vector<Pillar>& pillars,
                                 const SPointNetWeights& weights, int omega) {
  weights.validate();
  if (omega < 1) throw std::invalid_argument("omega must be at least 1");
  const int C = weights.channels;
  const int D = weights.input_dim;

  // Every zero padding row maps to the same per-channel constant, so compute
  // relu(bn(bias)) once instead of looping over (omega - count) copies.
  std::vector<float> pad(C);
  std::vector<float> inv_std(C);
  for (int c = 0; c < C; ++c) {
    inv_std[c] = 1.0f / std::sqrt(weights.bn_var[c]);
    const float bn = weights.bn_scale[c] * (weights.bias[c] - weights.bn_mean[c]) * inv_std[c] +
                     weights.bn_shift[c];
    pad[c] = bn > 0.0f ? bn : 0.0f;
  }

  PillarFeatures out;
  out.channels = C;
  out.count = static_cast<int>(pillars.size());
  out.data.assign(static_cast<size_t>(C) * pillars.size(), 0.0f);

  for (size_t q = 0; q < pillars.size(); ++q) {
    const Pillar& pillar = pillars[q];
    if (pillar.points.size() != static_cast<size_t>(omega) * D)
      throw std::invalid_argument("pillar row size does not match omega x input_dim");
    if (pillar.count < 0 || pillar.count > omega)
      throw std::invalid_argument("pillar count out of range");
    for (int c = 0; c < C; ++c) {
      const float* wrow = &weights.weight[static_cast<size_t>(c) * D];
      float best = pillar.count < omega ? pad[c]
                                        : -std::numeric_limits<float>::infinity();
      for (int i = 0; i < pillar.count; ++i) {
        const float* prow = &pillar.points[static_cast<size_t>(i) * D];
        float acc = weights.bias[c];
        for (int k = 0; k < D; ++k) acc += wrow[k] * prow[k];
        float bn = weights.bn_scale[c] * (acc - weights.bn_mean[c]) * inv_std[c] +
                   weights.bn_shift[c];
        if (bn < 0.0f) bn = 0.0f;
        if (bn > best) best = bn;
      }
      out.data[static_cast<size_t>(c) * pillars.size() + q] = best;
    }
  }
  return out;
}

PseudoImage scatter_to_grid(const PillarFeatures& features,
                            const std::vector<Pillar>& pillars,
                            const PillarGrid& grid) {
  if (features.count != static_cast<int>(pillars.size()))
    throw std::invalid_argument("feature count does not match pillar count");
  const int H = grid.rows(), W = grid.cols();
  PseudoImage img(features.channels, H, W);
  std::vector<uint8_t> seen(static_cast<size_t>(H) * W, 0);
  for (size_t q = 0; q < pillars.size(); ++q) {
    const Pillar& p = pillars[q];
    if (p.row < 0 || p.row >= H || p.col < 0 || p.col >= W)
      throw std::invalid_argument("pillar cell outside grid");
    uint8_t& flag = seen[static_cast<size_t>(p.row) * W + p.col];
    if (flag) throw std::invalid_argument("duplicate pillar cell in scatter");
    flag = 1;
    for (int c = 0; c < features.channels; ++c)
      img.at(c, p.row, p.col) = features.at(c, static_cast<int>(q));
  }
  return img;
}

PseudoImage encode_cloud(const PointCloud& cloud, const PillarGrid& grid, int omega,
                         uint64_t seed, const SPointNetWeights& weights) {
  const auto pillars = pillarize(cloud, grid, omega, seed);
  const auto features = spointnet_forward(pillars, weights, omega);
  return scatter_to_grid(features, pillars, grid);
}

void write_cloud_file(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  std::vector<uint8_t> buf;
  buf.reserve(cloud.size() * 16);
  for (const auto& p : cloud) {
    put_f32(buf, static_cast<float>(p.x));
    put_f32(buf, static_cast<float>(p.y));
    put_f32(buf, static_cast<float>(p.z));
    put_f32(buf, static_cast<float>(p.r));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

PointCloud read_cloud_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open: " + path);
  const std::streamoff size = in.tellg();
  if (size % 16 != 0)
    throw std::runtime_error("cloud file size is not a multiple of 16 bytes: " + path);
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (in.gcount() != size) throw std::runtime_error("short read: " + path);
  ByteReader r(buf.data(), buf.size());
  PointCloud cloud(static_cast<size_t>(size / 16));
  for (auto& p : cloud) {
    p.x = r.f32();
    p.y = r.f32();
    p.z = r.f32();
    p.r = r.f32();
  }
  return cloud;
}

}  // namespace coopdet
