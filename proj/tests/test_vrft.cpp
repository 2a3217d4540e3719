#include <cstring>
#include <limits>

#include "support.hpp"

using namespace vrf;

TEST(Vrft, HeaderLayout) {
  Tensor<float> t(Shape{1, 2, 3, 258}, 0.0f);
  const auto bytes = encode_vrft(t);
  ASSERT_EQ(bytes.size(), kVrftHeaderSize + t.numel() * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "VRFT", 4), 0);
  EXPECT_EQ(bytes[4], 1);  // version
  EXPECT_EQ(bytes[5], 0);  // f32
  EXPECT_EQ(bytes[6], 4);  // rank
  const std::uint8_t dims[] = {1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 2, 1, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 7, dims, 16), 0);
  EXPECT_EQ(encode_vrft(Tensor<double>(Shape{1, 1, 1, 1}))[5], 1);
}

TEST(Vrft, PayloadIsLittleEndianIeee) {
  Tensor<float> f(Shape{1, 1, 1, 1}, {1.0f});
  const auto bf = encode_vrft(f);
  const std::uint8_t one_f32[] = {0x00, 0x00, 0x80, 0x3f};
  EXPECT_EQ(std::memcmp(bf.data() + kVrftHeaderSize, one_f32, 4), 0);

  Tensor<double> d(Shape{1, 1, 1, 1}, {-2.0});
  const auto bd = encode_vrft(d);
  const std::uint8_t minus_two_f64[] = {0, 0, 0, 0, 0, 0, 0x00, 0xc0};
  EXPECT_EQ(std::memcmp(bd.data() + kVrftHeaderSize, minus_two_f64, 8), 0);
}

TEST(Vrft, RoundTripIsBitExact) {
  auto x = test::rand<double>(Shape{2, 3, 4, 5}, 11);
  x[0] = -0.0;
  x[1] = std::numeric_limits<double>::denorm_min();
  x[2] = std::numeric_limits<double>::infinity();
  EXPECT_EQ(encode_vrft(decode_vrft_as<double>(encode_vrft(x))), encode_vrft(x));

  const auto xf = test::rand<float>(Shape{1, 5, 3, 3}, 12);
  EXPECT_EQ(decode_vrft_as<float>(encode_vrft(xf)), xf);
  EXPECT_TRUE(std::holds_alternative<Tensor<float>>(decode_vrft(encode_vrft(xf))));
}

TEST(Vrft, FileRoundTrip) {
  const auto dir = test::temp_dir("vrft");
  const auto x = test::rand<double>(Shape{1, 2, 2, 2}, 13);
  write_vrft(dir / "x.vrft", x);
  EXPECT_EQ(read_vrft_as<double>(dir / "x.vrft"), x);
  EXPECT_EQ(std::filesystem::file_size(dir / "x.vrft"), kVrftHeaderSize + 8 * 8);
  EXPECT_THROW(read_vrft_as<double>(dir / "missing.vrft"), FormatError);
}

TEST(Vrft, RejectsMalformedInput) {
  const auto good = encode_vrft(test::rand<float>(Shape{1, 1, 2, 2}, 14));
  auto with = [&](std::size_t i, std::uint8_t v) {
    auto b = good;
    b[i] = v;
    return b;
  };
  EXPECT_THROW(decode_vrft_header(with(0, 'X')), FormatError);
  EXPECT_THROW(decode_vrft_header(with(4, 2)), FormatError);
  EXPECT_THROW(decode_vrft_header(with(5, 7)), FormatError);
  EXPECT_THROW(decode_vrft_header(with(6, 3)), FormatError);
  EXPECT_THROW(decode_vrft_header(with(7, 0)), FormatError);  // n = 0
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_vrft_header(truncated), FormatError);
  auto extended = good;
  extended.push_back(0);
  EXPECT_THROW(decode_vrft_header(extended), FormatError);
  EXPECT_THROW(decode_vrft_header(std::span(good.data(), 10)), FormatError);
  EXPECT_THROW(decode_vrft_as<double>(good), FormatError);
}
