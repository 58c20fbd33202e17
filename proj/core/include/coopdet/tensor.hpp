#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace coopdet {

// Dense C x H x W float32 grid, row-major within each channel. This is the
// unit that travels between agents, so it stays in 32-bit floats end to end.
struct PseudoImage {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // channels * height * width

  PseudoImage() = default;
  PseudoImage(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t size() const { return data.size(); }
};

// Row-major matrix of doubles for the attention / training math, which runs
// in 64-bit and only drops to float32 at file and wire boundaries.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Tensor record: two uint32 LE dimensions followed by rows*cols float32 LE
// values, row-major. Several records may be concatenated in one file.
void write_tensor_record(std::ostream& out, uint32_t rows, uint32_t cols,
                         const float* values);
void write_tensor_record(std::ostream& out, const Matrix& m);

struct TensorRecord {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> values;

  Matrix to_matrix() const;
};

// Reads one record. Throws std::runtime_error on truncation.
TensorRecord read_tensor_record(std::istream& in);

}  // namespace coopdet
