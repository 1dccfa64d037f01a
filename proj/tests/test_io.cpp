#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"
#include "support.hpp"

using namespace shapguard;

TEST(FormatDouble, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123, 0.0, 1e308}) {
    double back = 0;
    ASSERT_TRUE(io::parse_double(io::format_double(v), back));
    EXPECT_EQ(back, v);
  }
}

TEST(FormatDouble, NonFinite) {
  EXPECT_EQ(io::format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(io::format_double(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(ParseDouble, RejectsGarbage) {
  double v = 0;
  EXPECT_FALSE(io::parse_double("1.5x", v));
  EXPECT_FALSE(io::parse_double("", v));
  EXPECT_TRUE(io::parse_double(" 2.5 ", v));
  EXPECT_EQ(v, 2.5);
  EXPECT_TRUE(io::parse_double("NaN", v));
  EXPECT_TRUE(std::isnan(v));
}

TEST(SplitCsv, KeepsEmptyFields) {
  const auto f = io::split_csv_line("a,,c");
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[1], "");
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Files, WriteReadAndMissing) {
  const auto dir = testkit::scratch_dir("io");
  io::write_file(dir / "a" / "b.txt", "hello");
  EXPECT_EQ(io::read_file(dir / "a" / "b.txt"), "hello");
  EXPECT_EQ(io::sha256_file(dir / "a" / "b.txt"), io::sha256_hex("hello"));
  EXPECT_THROW(io::read_file(dir / "missing.txt"), IoError);
}
