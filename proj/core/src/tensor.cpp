#include "coopdet/tensor.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>

#include "coopdet/bytes.hpp"

namespace coopdet {

void write_tensor_record(std::ostream& out, uint32_t rows, uint32_t cols,
                         const float* values) {
  std::vector<uint8_t> buf;
  buf.reserve(8 + static_cast<size_t>(rows) * cols * 4);
  put_u32(buf, rows);
  put_u32(buf, cols);
  const size_t n = static_cast<size_t>(rows) * cols;
  for (size_t i = 0; i < n; ++i) put_f32(buf, values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("tensor record write failed");
}

void write_tensor_record(std::ostream& out, const Matrix& m) {
  std::vector<float> vals(m.data.size());
  for (size_t i = 0; i < m.data.size(); ++i) vals[i] = static_cast<float>(m.data[i]);
  write_tensor_record(out, static_cast<uint32_t>(m.rows),
                      static_cast<uint32_t>(m.cols), vals.data());
}

Matrix TensorRecord::to_matrix() const {
  Matrix m(static_cast<int>(rows), static_cast<int>(cols));
  for (size_t i = 0; i < values.size(); ++i) m.data[i] = values[i];
  return m;
}

TensorRecord read_tensor_record(std::istream& in) {
  uint8_t head[8];
  in.read(reinterpret_cast<char*>(head), 8);
  if (in.gcount() != 8) throw std::runtime_error("tensor record header truncated");
  ByteReader hr(head, 8);
  TensorRecord rec;
  rec.rows = hr.u32();
  rec.cols = hr.u32();
  const uint64_t n = static_cast<uint64_t>(rec.rows) * rec.cols;
  if (n > (1ull << 30))
    throw std::runtime_error("tensor record implausibly large");
  std::vector<uint8_t> body(static_cast<size_t>(n) * 4);
  in.read(reinterpret_cast<char*>(body.data()),
          static_cast<std::streamsize>(body.size()));
  if (static_cast<size_t>(in.gcount()) != body.size())
    throw std::runtime_error("tensor record payload truncated");
  ByteReader br(body.data(), body.size());
  rec.values.resize(static_cast<size_t>(n));
  for (uint64_t i = 0; i < n; ++i) rec.values[i] = br.f32();
  return rec;
}

}  // namespace coopdet
