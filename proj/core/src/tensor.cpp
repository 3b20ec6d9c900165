#include "stpd/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace stpd {

std::size_t numel(Shape const &shape)
{
  std::size_t n = shape.empty() ? 0 : 1;
  for (auto d : shape) { n *= d; }
  return n;
}

std::string shape_string(Shape const &shape)
{
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) { os << ','; }
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void validate_shape(Shape const &shape)
{
  if (shape.empty() || shape.size() > kMaxRank) {
    throw ParameterError("tensor rank must be between 1 and 5, got " + std::to_string(shape.size()));
  }
  for (auto d : shape) {
    if (d == 0) { throw ParameterError("tensor dimensions must be >= 1, got " + shape_string(shape)); }
  }
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill)
  : shape_(std::move(shape))
{
  validate_shape(shape_);
  data_.assign(numel(shape_), fill);
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data)
  : shape_(std::move(shape))
  , data_(std::move(data))
{
  validate_shape(shape_);
  if (data_.size() != numel(shape_)) {
    throw ParameterError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

template <typename Real>
void Tensor<Real>::fill(Real v)
{
  std::fill(data_.begin(), data_.end(), v);
}

template <typename Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) const &
{
  return Tensor(std::move(shape), data_);
}

template <typename Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) &&
{
  return Tensor(std::move(shape), std::move(data_));
}

template <typename Real>
std::size_t Tensor<Real>::slab_size() const
{
  return shape_.empty() ? 0 : data_.size() / shape_[0];
}

template <typename Real>
std::span<Real> Tensor<Real>::slab(std::size_t i)
{
  auto const n = slab_size();
  return std::span<Real>(data_).subspan(i * n, n);
}

template <typename Real>
std::span<Real const> Tensor<Real>::slab(std::size_t i) const
{
  auto const n = slab_size();
  return std::span<Real const>(data_).subspan(i * n, n);
}

template class Tensor<float>;
template class Tensor<double>;

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t> &out, U v)
{
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
}

template <typename U>
U get_le(std::uint8_t const *p)
{
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    v |= static_cast<U>(p[b]) << (8 * b);
  }
  return v;
}

template <typename Real>
using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;

template <typename Stored, typename Real>
void decode_payload(std::uint8_t const *p, std::span<Real> out)
{
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto const bits = get_le<Bits<Stored>>(p + i * sizeof(Stored));
    out[i] = static_cast<Real>(std::bit_cast<Stored>(bits));
  }
}

constexpr std::size_t kFixedHeader = 4 + 1 + 1 + 1;

} // namespace

template <typename Real>
std::vector<std::uint8_t> encode_tensor(Tensor<Real> const &t)
{
  validate_shape(t.shape());
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 8 * t.rank() + sizeof(Real) * t.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  out.push_back(kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of<Real>()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) { put_le<std::uint64_t>(out, d); }
  for (Real v : t.data()) { put_le(out, std::bit_cast<Bits<Real>>(v)); }
  return out;
}

template <typename Real>
Tensor<Real> decode_tensor(std::span<std::uint8_t const> bytes, std::string const &what)
{
  if (bytes.size() < 4 || !std::equal(std::begin(kTensorMagic), std::end(kTensorMagic), bytes.begin())) {
    throw IoError(what + ": not a tensor file");
  }
  if (bytes.size() < kFixedHeader) { throw IoError(what + ": corrupt file"); }
  if (bytes[4] != kTensorVersion) {
    throw IoError(what + ": unsupported version " + std::to_string(bytes[4]));
  }
  auto const dtype = bytes[5];
  std::size_t elem = 0;
  if (dtype == static_cast<std::uint8_t>(DType::Float32)) {
    elem = 4;
  } else if (dtype == static_cast<std::uint8_t>(DType::Float64)) {
    elem = 8;
  } else {
    throw IoError(what + ": unsupported dtype " + std::to_string(dtype));
  }
  std::size_t const rank = bytes[6];
  if (rank < 1 || rank > kMaxRank) { throw IoError(what + ": corrupt file (rank " + std::to_string(rank) + ")"); }
  if (bytes.size() < kFixedHeader + 8 * rank) { throw IoError(what + ": corrupt file"); }
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint64_t>(bytes.data() + kFixedHeader + 8 * i);
    if (shape[i] == 0) { throw IoError(what + ": corrupt file (zero dimension)"); }
  }
  std::size_t const offset = kFixedHeader + 8 * rank;
  std::size_t const count = numel(shape);
  if (bytes.size() - offset != count * elem) { throw IoError(what + ": corrupt file (payload size)"); }

  Tensor<Real> t(shape);
  if (elem == 4) {
    decode_payload<float>(bytes.data() + offset, t.data());
  } else {
    decode_payload<double>(bytes.data() + offset, t.data());
  }
  return t;
}

template <typename Real>
void write_tensor(Tensor<Real> const &t, std::filesystem::path const &path)
{
  auto const bytes = encode_tensor(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) { throw IoError(path.string() + ": cannot open for writing"); }
  os.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) { throw IoError(path.string() + ": write failed"); }
}

namespace {

std::vector<std::uint8_t> slurp(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) { throw IoError(path.string() + ": cannot open for reading"); }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

} // namespace

template <typename Real>
Tensor<Real> read_tensor(std::filesystem::path const &path)
{
  auto const bytes = slurp(path);
  return decode_tensor<Real>(bytes, path.string());
}

DType read_tensor_dtype(std::filesystem::path const &path)
{
  auto const bytes = slurp(path);
  if (bytes.size() < kFixedHeader || !std::equal(std::begin(kTensorMagic), std::end(kTensorMagic), bytes.begin())) {
    throw IoError(path.string() + ": not a tensor file");
  }
  if (bytes[5] != 1 && bytes[5] != 2) { throw IoError(path.string() + ": unsupported dtype"); }
  return static_cast<DType>(bytes[5]);
}

template std::vector<std::uint8_t> encode_tensor(Tensor<float> const &);
template std::vector<std::uint8_t> encode_tensor(Tensor<double> const &);
template Tensor<float> decode_tensor(std::span<std::uint8_t const>, std::string const &);
template Tensor<double> decode_tensor(std::span<std::uint8_t const>, std::string const &);
template void write_tensor(Tensor<float> const &, std::filesystem::path const &);
template void write_tensor(Tensor<double> const &, std::filesystem::path const &);
template Tensor<float> read_tensor(std::filesystem::path const &);
template Tensor<double> read_tensor(std::filesystem::path const &);

} // namespace stpd
