#pragma once

// VET1 tensor files.
//
//   offset  size  field
//   0       4     magic "VET1"
//   4       1     dtype code (0x01 = float32 little-endian)
//   5       1     ndim, 1..4
//   6       2     zero padding
//   8       8*nd  dims, u64 little-endian
//   ...           row-major payload
//
// A [2,2] float32 tensor is therefore 8 + 16 + 16 = 40 bytes.

#include "vlme/error.hpp"
#include "vlme/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace vlme {

inline constexpr std::uint8_t kDtypeFloat32 = 0x01;
inline constexpr int kMaxTensorRank = 4;

enum class TensorErrorCode {
  bad_magic,
  unsupported_dtype,
  bad_rank,
  bad_padding,
  empty_tensor,
  truncated_header,
  truncated_payload,
  trailing_bytes,
  shape_mismatch,
  non_finite,
};

std::string_view to_string(TensorErrorCode code);

/// Raised for malformed tensor files. Corrupted files are I/O failures;
/// bad caller-supplied shapes or data are validation failures.
class TensorFormatError : public Error {
 public:
  TensorFormatError(TensorErrorCode code, const std::string& detail);
  TensorErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  TensorErrorCode code_;
  std::string detail_;
};

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t numel() const;
};

void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> shape,
                  std::span<const float> data);
Tensor read_tensor(const std::filesystem::path& path);

/// In-memory codec used by the file functions.
std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> shape, std::span<const float> data);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

/// Narrows to float32 on write; widens to double on read.
void write_matrix(const std::filesystem::path& path, const RowMatrix<double>& m);
void write_vector(const std::filesystem::path& path, const Vector<double>& v);
RowMatrix<double> read_matrix(const std::filesystem::path& path);
Vector<double> read_vector(const std::filesystem::path& path);

}  // namespace vlme
