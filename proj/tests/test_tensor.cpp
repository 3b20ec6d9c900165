#include "oracles.hpp"

#include <stpd/tensor.hpp>

#include <gtest/gtest.h>

#include <cstring>

using namespace stpd;

TEST(Tensor, ShapeValidation)
{
  EXPECT_THROW(validate_shape({}), ParameterError);
  EXPECT_THROW(validate_shape({1, 2, 3, 4, 5, 6}), ParameterError);
  EXPECT_THROW(validate_shape({3, 0}), ParameterError);
  EXPECT_NO_THROW(validate_shape({1, 2, 3, 4, 5}));
  EXPECT_THROW(TensorD({2, 2}, std::vector<double>(3)), ParameterError);
  EXPECT_EQ(numel({2, 3, 4}), 24u);
  EXPECT_EQ(shape_string({2, 3}), "(2,3)");
}

TEST(Tensor, SlabsAreRowMajor)
{
  TensorD t({2, 3}, {0, 1, 2, 3, 4, 5});
  ASSERT_EQ(t.slab_size(), 3u);
  EXPECT_EQ(t.slab(1)[0], 3.0);
  EXPECT_EQ(t.slab(1)[2], 5.0);
  auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.dim(0), 3u);
  EXPECT_EQ(r[5], 5.0);
  EXPECT_THROW(t.reshaped({4}), ParameterError);
}

namespace {

void put_u64(std::vector<std::uint8_t> &b, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i) { b.push_back(static_cast<std::uint8_t>(v >> (8 * i))); }
}

} // namespace

TEST(TensorIo, ByteLayoutMatchesHandEncodedFile)
{
  // "STEN", version 1, dtype 2 (f64), rank 2, dims 2 and 3, little-endian payload
  std::vector<std::uint8_t> expected{'S', 'T', 'E', 'N', 1, 2, 2};
  put_u64(expected, 2);
  put_u64(expected, 3);
  std::vector<double> const values{1.5, -2.0, 0.0, 1e-300, 3.25, -7.0};
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(expected, bits);
  }
  TensorD t({2, 3}, values);
  EXPECT_EQ(encode_tensor(t), expected);
  EXPECT_EQ(decode_tensor<double>(expected), t);
}

TEST(TensorIo, RoundTripBothDtypes)
{
  auto const dir = oracle::temp_dir("tensor_io");
  auto const d = oracle::random_tensor({2, 3, 4, 5}, 1);
  write_tensor(d, dir / "d.stp");
  EXPECT_EQ(read_tensor<double>(dir / "d.stp"), d);
  EXPECT_EQ(read_tensor_dtype(dir / "d.stp"), DType::Float64);

  auto const f = d.cast<float>();
  write_tensor(f, dir / "f.stp");
  EXPECT_EQ(read_tensor<float>(dir / "f.stp"), f);
  EXPECT_EQ(read_tensor_dtype(dir / "f.stp"), DType::Float32);
  // stored dtype is converted on read
  EXPECT_EQ(read_tensor<double>(dir / "f.stp"), f.cast<double>());
}

TEST(TensorIo, CorruptInputsAreRejectedWithThePath)
{
  auto const dir = oracle::temp_dir("tensor_bad");
  auto bytes = encode_tensor(TensorD({4}, 1.0));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensor<double>(bad_magic), IoError);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_tensor<double>(truncated), IoError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_tensor<double>(trailing), IoError);

  auto bad_dtype = bytes;
  bad_dtype[5] = 9;
  EXPECT_THROW(decode_tensor<double>(bad_dtype), IoError);

  auto bad_rank = bytes;
  bad_rank[6] = 0;
  EXPECT_THROW(decode_tensor<double>(bad_rank), IoError);

  try {
    read_tensor<double>(dir / "missing.stp");
    FAIL();
  } catch (IoError const &e) {
    EXPECT_NE(std::string(e.what()).find("missing.stp"), std::string::npos);
  }
}
