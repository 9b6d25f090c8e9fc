#include <gtest/gtest.h>

#include <survfuse/core.hpp>

using namespace survfuse;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, "init.head"), derive_seed(1, "init.ae"));
  EXPECT_NE(derive_seed(1, "train.shuffle"), derive_seed(2, "train.shuffle"));
  EXPECT_EQ(derive_seed(7, "x"), derive_seed(7, "x"));
}

TEST(Rng, UniformAndIndexRanges) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.index(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Text, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5, 0.0}) {
    double back = 0.0;
    ASSERT_TRUE(parse_double(format_double(v), back));
    EXPECT_EQ(back, v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Text, ParseDoubleStrict) {
  double v = 0.0;
  EXPECT_TRUE(parse_double(" 2.5 ", v));
  EXPECT_EQ(v, 2.5);
  EXPECT_FALSE(parse_double("2.5x", v));
  EXPECT_FALSE(parse_double("", v));
}

TEST(Text, SplitKeepsEmptyFields) {
  const auto parts = split("a,,b,", ',');
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[1], "");
  EXPECT_EQ(parts[2], "b");
}

TEST(KeyValues, CommentsAndOrder) {
  const auto kv = parse_key_values("# header\nb = 2\n\na=1 # trailing\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0].first, "b");
  EXPECT_EQ(kv[1].second, "1");
}

TEST(KeyValues, DuplicateAndMalformedRejected) {
  EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), ValidationError);
  EXPECT_THROW(parse_key_values("just words\n"), ValidationError);
}

TEST(Matrix, GatherRows) {
  const auto m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> idx = {2, 0};
  const auto g = gather_rows(m, idx);
  EXPECT_EQ(g(0, 0), 5);
  EXPECT_EQ(g(1, 1), 2);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), ValidationError);
}

TEST(Numerics, SigmoidStableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_EQ(sigmoid(-std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_NEAR(log_add_exp(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
}

TEST(Binary, RoundTrip) {
  BinaryWriter w;
  w.u32(7);
  w.u64(1ULL << 40);
  w.f64(-0.125);
  w.f32(1.5f);
  w.str("hello");
  BinaryReader r(w.buffer(), "mem");
  EXPECT_EQ(r.u32(), 7u);
  EXPECT_EQ(r.u64(), 1ULL << 40);
  EXPECT_EQ(r.f64(), -0.125);
  EXPECT_EQ(r.f32(), 1.5f);
  EXPECT_EQ(r.str(), "hello");
  EXPECT_TRUE(r.at_end());
  EXPECT_THROW(r.u32(), ValidationError);
}

TEST(Hash, Fnv1aKnownValue) {
  // FNV-1a 64 of the empty string is the offset basis.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
}
