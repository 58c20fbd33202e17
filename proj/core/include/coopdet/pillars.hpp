#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "coopdet/geometry.hpp"
#include "coopdet/tensor.hpp"

namespace coopdet {

// Birds-eye discretization of the detection range. x maps to columns, y to
// rows; cells are half-open ([lo, hi) along each axis) so every in-range
// point lands in exactly one cell.
struct PillarGrid {
  double x_min = -40.32;
  double y_min = -35.84;
  double z_min = -3.0;
  double x_range = 80.64;
  double y_range = 71.68;
  double z_range = 4.0;
  double cell_x = 0.56;  // meters per cell along x
  double cell_y = 0.56;  // meters per cell along y

  int rows() const;  // y_range / cell_y
  int cols() const;  // x_range / cell_x
  // Throws std::invalid_argument if ranges are not positive or not divisible
  // by the cell size within 1e-6.
  void validate() const;

  bool contains(double x, double y, double z) const;
  // Cell of an in-range point.
  std::array<int, 2> cell_of(double x, double y) const;  // {row, col}
  // Center of a cell in metric coordinates.
  std::array<double, 2> cell_center(int row, int col) const;  // {x, y}
};

// One occupied cell: up to `omega` points, each augmented to nine features
// (x, y, z, r, offsets from the cell point mean, planar offsets from the
// cell center). Rows past `count` are zero padding.
struct Pillar {
  int row = 0;
  int col = 0;
  int count = 0;                // real points in this pillar
  std::vector<float> points;    // omega x 9, row-major
};

// Nine-feature augmentation of one point given its pillar's mean and center.
std::array<double, 9> augment_point(const LidarPoint& p, const Vec3& mean,
                                    const std::array<double, 2>& center_xy);

// Buckets a cloud into pillars. Points outside the grid are dropped. Cells
// holding more than `omega` points are down-sampled with a per-cell stream
// forked from `seed` by cell index; the result is invariant under input
// order because candidates are first put into a canonical order (content
// hash of the coordinate bit patterns, ties by value).
std::vector<Pillar> pillarize(const PointCloud& cloud, const PillarGrid& grid,
                              int omega, uint64_t seed);

// Shared per-point encoder: linear layer, batch norm (inference form,
// y = scale * (x - mean) / sqrt(var) + shift), ReLU, then max over the
// points of each pillar.
struct SPointNetWeights {
  int channels = 64;   // output features per pillar
  int input_dim = 9;
  std::vector<float> weight;  // channels x input_dim, row-major
  std::vector<float> bias;    // channels
  std::vector<float> bn_scale, bn_shift, bn_mean, bn_var;  // channels each

  void validate() const;  // dimension checks, bn_var strictly positive
};

// Weights drawn uniformly from [-1/sqrt(input_dim), 1/sqrt(input_dim)] on a
// split-mix stream; batch norm starts at identity statistics (mean 0, var 1,
// scale 1, shift 0).
SPointNetWeights seeded_spointnet_weights(int channels, int input_dim, uint64_t seed);

// Per-pillar features, channels x count(pillars), column q = pillar q.
struct PillarFeatures {
  int channels = 0;
  int count = 0;
  std::vector<float> data;  // channels x count, row-major

  float at(int c, int q) const { return data[static_cast<size_t>(c) * count + q]; }
};

PillarFeatures spointnet_forward(const std::vector<Pillar>& pillars,
                                 const SPointNetWeights& weights, int omega);

// Scatters pillar feature columns back onto the grid; untouched cells stay
// zero. Duplicate or out-of-range cells are an error.
PseudoImage scatter_to_grid(const PillarFeatures& features,
                            const std::vector<Pillar>& pillars,
                            const PillarGrid& grid);

// Whole encoder: pillarize, encode, scatter.
PseudoImage encode_cloud(const PointCloud& cloud, const PillarGrid& grid, int omega,
                         uint64_t seed, const SPointNetWeights& weights);

// Point cloud files: four float32 LE per point (x, y, z, reflectance), no
// header. Read rejects files whose size is not a multiple of 16 bytes.
void write_cloud_file(const std::string& path, const PointCloud& cloud);
PointCloud read_cloud_file(const std::string& path);

}  // namespace coopdet
