#include "vlme/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace vlme {
namespace {

constexpr std::size_t kFixedHeaderBytes = 8;

ErrorKind kind_of(TensorErrorCode code) {
  switch (code) {
    case TensorErrorCode::shape_mismatch:
    case TensorErrorCode::non_finite:
    case TensorErrorCode::empty_tensor:
      return ErrorKind::validation;
    default:
      return ErrorKind::io;
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

// Product of dims, or nullopt-like max() on overflow.
std::uint64_t checked_numel(std::span<const std::uint64_t> shape) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    n *= d;
  }
  return n;
}

std::string shape_string(std::span<const std::uint64_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace

std::string_view to_string(TensorErrorCode code) {
  switch (code) {
    case TensorErrorCode::bad_magic: return "bad magic";
    case TensorErrorCode::unsupported_dtype: return "unsupported dtype";
    case TensorErrorCode::bad_rank: return "bad rank";
    case TensorErrorCode::bad_padding: return "bad padding";
    case TensorErrorCode::empty_tensor: return "empty tensor";
    case TensorErrorCode::truncated_header: return "truncated header";
    case TensorErrorCode::truncated_payload: return "truncated payload";
    case TensorErrorCode::trailing_bytes: return "trailing bytes";
    case TensorErrorCode::shape_mismatch: return "shape mismatch";
    case TensorErrorCode::non_finite: return "non-finite data";
  }
  return "unknown tensor error";
}

TensorFormatError::TensorFormatError(TensorErrorCode code, const std::string& detail)
    : Error(kind_of(code), std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

std::uint64_t Tensor::numel() const { return checked_numel(shape); }

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> shape, std::span<const float> data) {
  if (shape.empty() || shape.size() > kMaxTensorRank) {
    throw TensorFormatError(TensorErrorCode::bad_rank, "rank " + std::to_string(shape.size()) + " not in 1..4");
  }
  const std::uint64_t numel = checked_numel(shape);
  if (numel == 0) {
    throw TensorFormatError(TensorErrorCode::empty_tensor, "shape " + shape_string(shape));
  }
  if (numel != data.size()) {
    throw TensorFormatError(TensorErrorCode::shape_mismatch,
                            "shape " + shape_string(shape) + " needs " + std::to_string(numel) +
                                " values, got " + std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw TensorFormatError(TensorErrorCode::non_finite, "element " + std::to_string(i));
    }
  }

  std::vector<std::uint8_t> out{'V', 'E', 'T', '1', kDtypeFloat32, static_cast<std::uint8_t>(shape.size()), 0, 0};
  out.reserve(kFixedHeaderBytes + 8 * shape.size() + 4 * data.size());
  for (auto d : shape) put_u64(out, d);
  for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFixedHeaderBytes) {
    if (bytes.size() >= 4 && !(bytes[0] == 'V' && bytes[1] == 'E' && bytes[2] == 'T' && bytes[3] == '1')) {
      throw TensorFormatError(TensorErrorCode::bad_magic, "file does not start with VET1");
    }
    throw TensorFormatError(TensorErrorCode::truncated_header,
                            std::to_string(bytes.size()) + " bytes, need at least 8");
  }
  if (!(bytes[0] == 'V' && bytes[1] == 'E' && bytes[2] == 'T' && bytes[3] == '1')) {
    throw TensorFormatError(TensorErrorCode::bad_magic, "file does not start with VET1");
  }
  if (bytes[4] != kDtypeFloat32) {
    throw TensorFormatError(TensorErrorCode::unsupported_dtype, "code " + std::to_string(bytes[4]));
  }
  const int rank = bytes[5];
  if (rank < 1 || rank > kMaxTensorRank) {
    throw TensorFormatError(TensorErrorCode::bad_rank, "rank " + std::to_string(rank) + " not in 1..4");
  }
  if (bytes[6] != 0 || bytes[7] != 0) {
    throw TensorFormatError(TensorErrorCode::bad_padding, "header bytes 6-7 must be zero");
  }
  const std::size_t header = kFixedHeaderBytes + 8 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) {
    throw TensorFormatError(TensorErrorCode::truncated_header, "dims end at byte " + std::to_string(header) +
                                                                   ", file has " + std::to_string(bytes.size()));
  }

  Tensor t;
  t.shape.resize(rank);
  for (int i = 0; i < rank; ++i) t.shape[i] = get_u64(bytes.data() + kFixedHeaderBytes + 8 * i);
  const std::uint64_t numel = checked_numel(t.shape);
  if (numel == 0) {
    throw TensorFormatError(TensorErrorCode::empty_tensor, "shape " + shape_string(t.shape));
  }
  const std::uint64_t available = (bytes.size() - header) / 4;
  if (numel > available) {
    throw TensorFormatError(TensorErrorCode::truncated_payload,
                            "shape " + shape_string(t.shape) + " declares " + std::to_string(numel) +
                                " values, payload holds " + std::to_string(available));
  }
  if (bytes.size() - header != 4 * numel) {
    throw TensorFormatError(TensorErrorCode::trailing_bytes,
                            std::to_string(bytes.size() - header - 4 * numel) + " bytes after payload");
  }

  t.data.resize(numel);
  const std::uint8_t* p = bytes.data() + header;
  for (std::uint64_t i = 0; i < numel; ++i) t.data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return t;
}

void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> shape,
                  std::span<const float> data) {
  const auto bytes = encode_tensor(shape, data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const TensorFormatError& e) {
    throw TensorFormatError(e.code(), path.string() + ": " + e.detail());
  }
}

void write_matrix(const std::filesystem::path& path, const RowMatrix<double>& m) {
  const std::vector<float> data(m.data(), m.data() + m.size());
  const std::uint64_t shape[] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  write_tensor(path, shape, data);
}

void write_vector(const std::filesystem::path& path, const Vector<double>& v) {
  const std::vector<float> data(v.data(), v.data() + v.size());
  const std::uint64_t shape[] = {static_cast<std::uint64_t>(v.size())};
  write_tensor(path, shape, data);
}

RowMatrix<double> read_matrix(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.shape.size() != 2) {
    throw ValidationError(path.string() + ": expected a rank-2 tensor, got rank " + std::to_string(t.shape.size()));
  }
  RowMatrix<double> m(static_cast<Index>(t.shape[0]), static_cast<Index>(t.shape[1]));
  for (std::size_t i = 0; i < t.data.size(); ++i) m.data()[i] = t.data[i];
  return m;
}

Vector<double> read_vector(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.shape.size() != 1) {
    throw ValidationError(path.string() + ": expected a rank-1 tensor, got rank " + std::to_string(t.shape.size()));
  }
  Vector<double> v(static_cast<Index>(t.shape[0]));
  for (std::size_t i = 0; i < t.data.size(); ++i) v[static_cast<Index>(i)] = t.data[i];
  return v;
}

}  // namespace vlme
