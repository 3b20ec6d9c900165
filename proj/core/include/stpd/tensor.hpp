#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stpd {

/// Bad argument, bad shape, bad configuration value.
class ParameterError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// File-system or file-format failure. The message always carries the path.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 5;

std::size_t numel(Shape const &shape);
std::string shape_string(Shape const &shape);

/// Throws ParameterError unless 1 <= rank <= 5 and every dimension >= 1.
void validate_shape(Shape const &shape);

/// Dense row-major array. A default-constructed tensor is empty (rank 0) and
/// only serves as a placeholder; every constructed tensor satisfies
/// validate_shape.
template <typename Real>
class Tensor
{
public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  Shape const &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<Real const> data() const { return data_; }
  std::vector<Real> const &vector() const { return data_; }

  Real &operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  void fill(Real v);

  /// Same data, new shape. Element counts must agree.
  Tensor reshaped(Shape shape) const &;
  Tensor reshaped(Shape shape) &&;

  /// Contiguous slab along the leading axis: index i of dimension 0.
  std::span<Real> slab(std::size_t i);
  std::span<Real const> slab(std::size_t i) const;
  std::size_t slab_size() const;

  template <typename Other>
  Tensor<Other> cast() const
  {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  bool operator==(Tensor const &) const = default;

private:
  Shape shape_;
  std::vector<Real> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

enum class DType : std::uint8_t
{
  Float32 = 1,
  Float64 = 2,
};

template <typename Real>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::Float32; }
template <>
constexpr DType dtype_of<double>() { return DType::Float64; }

// ".stp" container: "STEN", u8 version (1), u8 dtype, u8 rank, rank x u64 LE
// dims, then the row-major little-endian payload.
inline constexpr char kTensorMagic[4] = {'S', 'T', 'E', 'N'};
inline constexpr std::uint8_t kTensorVersion = 1;

template <typename Real>
std::vector<std::uint8_t> encode_tensor(Tensor<Real> const &t);

/// Decodes a byte image. `what` names the source in error messages. Values are
/// converted to Real when the stored dtype differs.
template <typename Real>
Tensor<Real> decode_tensor(std::span<std::uint8_t const> bytes, std::string const &what = "<memory>");

template <typename Real>
void write_tensor(Tensor<Real> const &t, std::filesystem::path const &path);

template <typename Real>
Tensor<Real> read_tensor(std::filesystem::path const &path);

/// Dtype recorded in a tensor file header.
DType read_tensor_dtype(std::filesystem::path const &path);

} // namespace stpd
