#pragma once

// Little-endian cursor helpers shared by the NRVF and NRVP codecs.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "rwseg/error.hpp"
#include "rwseg/types.hpp"

namespace rwseg::detail {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

class ByteWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(const void* data, std::size_t n) { raw(data, n); }
  void string(const std::string& s) {
    u32(std::uint32_t(s.size()));
    raw(s.data(), s.size());
  }
  void f32_matrix(const Matrix& m) {
    const std::size_t start = buf_.size();
    buf_.resize(start + std::size_t(m.size()) * sizeof(float));
    auto* out = buf_.data() + start;
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        const float f = float(m(i, j));
        std::memcpy(out, &f, sizeof f);
        out += sizeof f;
      }
    }
  }

  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void require(std::size_t n, const char* field) const {
    if (n > remaining()) {
      fail(ErrorCode::CorruptPayload, std::string("file ends inside ") + field + " (need " +
                                          std::to_string(n) + " bytes, " +
                                          std::to_string(remaining()) + " left)");
    }
  }
  std::uint32_t u32(const char* field) { return scalar<std::uint32_t>(field); }
  std::int32_t i32(const char* field) { return scalar<std::int32_t>(field); }
  double f64(const char* field) { return scalar<double>(field); }
  void copy(void* out, std::size_t n, const char* field) {
    require(n, field);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string string(std::uint32_t max_bytes, const char* field) {
    const std::uint32_t n = u32(field);
    if (n > max_bytes) {
      fail(ErrorCode::InconsistentHeader, std::string(field) + " length " + std::to_string(n) +
                                              " exceeds limit " + std::to_string(max_bytes));
    }
    require(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Caller must have checked rows * cols * 4 against remaining().
  Matrix f32_matrix(Index rows, Index cols, const char* field) {
    require(std::size_t(rows) * std::size_t(cols) * sizeof(float), field);
    Matrix m(rows, cols);
    const auto* in = bytes_.data() + pos_;
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        float f;
        std::memcpy(&f, in, sizeof f);
        in += sizeof f;
        if (!std::isfinite(f)) {
          fail(ErrorCode::CorruptPayload, std::string("non-finite value in ") + field);
        }
        m(i, j) = double(f);
      }
    }
    pos_ += std::size_t(rows) * std::size_t(cols) * sizeof(float);
    return m;
  }

 private:
  template <class T>
  T scalar(const char* field) {
    T v;
    copy(&v, sizeof v, field);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace rwseg::detail
