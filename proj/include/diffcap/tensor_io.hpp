#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffcap/types.hpp"

namespace diffcap {

/// Raw tensor file:
///
///   {"dtype":"f32","shape":[n,d],"layout":"row-major","byte_order":"little"}\n
///   <4 * prod(shape) bytes of little-endian IEEE-754 binary32, row-major>
///
/// The header is one line of JSON and is fully validated before the payload is read.
struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
};

class TensorFormatError : public Error {
 public:
  enum class Kind { kIo, kMalformedHeader, kTruncatedPayload, kShapeMismatch };

  TensorFormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline constexpr std::size_t kMaxHeaderBytes = 4096;

}  // namespace detail

inline std::string tensor_header(const std::vector<std::uint64_t>& shape) {
  std::string out = R"({"dtype":"f32","shape":[)";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  out += R"(],"layout":"row-major","byte_order":"little"})";
  return out;
}

inline std::string encode_tensor(const Tensor& t) {
  if (t.element_count() != t.data.size())
    throw TensorFormatError(TensorFormatError::Kind::kShapeMismatch, "tensor: shape does not match data length");
  std::string out = tensor_header(t.shape);
  out += '\n';
  out.reserve(out.size() + 4 * t.data.size());
  for (float f : t.data) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) out += static_cast<char>((v >> (8 * b)) & 0xFFu);
  }
  return out;
}

inline Tensor decode_tensor(const std::string& bytes) {
  using Kind = TensorFormatError::Kind;
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos || nl > detail::kMaxHeaderBytes)
    throw TensorFormatError(Kind::kMalformedHeader, "tensor: missing header line");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw TensorFormatError(Kind::kMalformedHeader, std::string("tensor: header is not JSON: ") + e.what());
  }
  auto field = [&](const char* key, const char* expected) {
    if (!h.is_object() || !h.contains(key) || !h[key].is_string() || h[key].get<std::string>() != expected)
      throw TensorFormatError(Kind::kMalformedHeader,
                              std::string("tensor: header field '") + key + "' must be \"" + expected + "\"");
  };
  field("dtype", "f32");
  field("layout", "row-major");
  field("byte_order", "little");
  if (!h.contains("shape") || !h["shape"].is_array() || h["shape"].empty())
    throw TensorFormatError(Kind::kMalformedHeader, "tensor: header 'shape' must be a non-empty array");
  Tensor t;
  for (const auto& s : h["shape"]) {
    if (!s.is_number_unsigned()) throw TensorFormatError(Kind::kMalformedHeader, "tensor: shape entries must be >= 0");
    t.shape.push_back(s.get<std::uint64_t>());
  }
  const std::uint64_t expected = 4 * t.element_count();
  const std::uint64_t actual = bytes.size() - nl - 1;
  if (actual < expected)
    throw TensorFormatError(Kind::kTruncatedPayload, "tensor: truncated payload, expected " + std::to_string(expected) +
                                                         " bytes, got " + std::to_string(actual));
  if (actual > expected)
    throw TensorFormatError(Kind::kShapeMismatch, "tensor: payload has " + std::to_string(actual) +
                                                      " bytes but shape implies " + std::to_string(expected));
  t.data.resize(t.element_count());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
    t.data[i] = std::bit_cast<float>(v);
  }
  return t;
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const std::string bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorFormatError(TensorFormatError::Kind::kIo, "tensor: cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorFormatError(TensorFormatError::Kind::kIo, "tensor: write failed for " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFormatError(TensorFormatError::Kind::kIo, "tensor: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

/// Stacks equally sized vectors as rows of an [n, d] tensor.
inline Tensor rows_to_tensor(const std::vector<Vector>& rows) {
  Tensor t;
  const std::uint64_t d = rows.empty() ? 0 : static_cast<std::uint64_t>(rows.front().size());
  t.shape = {rows.size(), d};
  t.data.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (static_cast<std::uint64_t>(r.size()) != d) throw DimensionError("rows_to_tensor: ragged rows");
    for (Eigen::Index i = 0; i < r.size(); ++i) t.data.push_back(static_cast<float>(r[i]));
  }
  return t;
}

inline std::vector<Vector> tensor_to_rows(const Tensor& t) {
  if (t.shape.size() != 2) throw DimensionError("tensor_to_rows: expected a rank-2 tensor");
  const auto n = t.shape[0], d = t.shape[1];
  std::vector<Vector> rows;
  rows.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Vector r(static_cast<Eigen::Index>(d));
    for (std::uint64_t j = 0; j < d; ++j) r[static_cast<Eigen::Index>(j)] = t.data[i * d + j];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Tensor matrix_to_tensor(const Matrix& m) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(static_cast<float>(m(i, j)));
  return t;
}

}  // namespace diffcap
