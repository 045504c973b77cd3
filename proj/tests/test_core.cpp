#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "ocon/binary_io.hpp"
#include "ocon/config.hpp"
#include "ocon/error.hpp"
#include "ocon/parallel.hpp"
#include "ocon/rng.hpp"

using namespace ocon;

TEST(Error, NamesAndExitCodesFollowEnumOrder) {
  EXPECT_EQ(errc_name(Errc::UnknownGroupChar), "UnknownGroupChar");
  EXPECT_EQ(errc_name(Errc::HashMismatch), "HashMismatch");
  EXPECT_EQ(exit_code(Errc::UnknownGroupChar), 10);
  EXPECT_EQ(exit_code(Errc::InvalidConfig), 27);
  std::set<std::string_view> unique(kErrcNames.begin(), kErrcNames.end());
  EXPECT_EQ(unique.size(), kErrcNames.size());
  Error e(Errc::MissingMember, "uh");
  EXPECT_EQ(e.code(), Errc::MissingMember);
  EXPECT_EQ(e.name(), "MissingMember");
  EXPECT_STREQ(e.what(), "MissingMember: uh");
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DerivedSeedsAreDistinctPerStreamAndIndex) {
  std::set<std::uint64_t> seen;
  for (auto s : {Stream::Subset, Stream::Split, Stream::Init, Stream::Shuffle, Stream::Dropout, Stream::Fold, Stream::Member, Stream::Cell})
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(derive_seed(7, s, i));
  EXPECT_EQ(seen.size(), 8u * 50u);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowIsUniformChiSquare) {
  // 10 bins, 20000 draws; chi-square critical value at p = 0.001, 9 dof.
  Rng r(99);
  std::vector<int> bins(10, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++bins[r.below(10)];
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - n / 10.0) * (b - n / 10.0) / (n / 10.0);
  EXPECT_LT(chi2, 27.88);
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(3);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  r.shuffle(w.begin(), w.end());
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(BinaryIo, Fnv1aKnownVectors) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64(std::string_view("foobar")), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(BinaryIo, RoundTripAndSeal) {
  ByteWriter w;
  w.put<std::uint32_t>(0xdeadbeef);
  w.put<double>(-0.0);
  w.put_string("hello");
  const std::vector<double> xs = {1.5, std::nan(""), 1e-300};
  w.put_doubles(xs);
  w.seal();
  const auto bytes = w.bytes();

  ByteReader r(bytes);
  r.verify_seal();
  EXPECT_EQ(r.get<std::uint32_t>(), 0xdeadbeefu);
  const double z = r.get<double>();
  EXPECT_TRUE(std::signbit(z));
  EXPECT_EQ(r.get_string(), "hello");
  const auto back = r.get_doubles();
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(std::memcmp(back.data(), xs.data(), sizeof(double) * 3), 0);
  EXPECT_TRUE(r.at_seal());
}

TEST(BinaryIo, LittleEndianLayout) {
  ByteWriter w;
  w.put<std::uint32_t>(0x01020304);
  const auto b = w.bytes();
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[0], 0x04);
  EXPECT_EQ(b[3], 0x01);
}

TEST(BinaryIo, FlippedByteOrTruncationIsCorrupt) {
  ByteWriter w;
  w.put_string("payload");
  w.seal();
  auto bytes = w.bytes();
  bytes[5] ^= 0x40;
  try {
    ByteReader(bytes).verify_seal();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorruptPayload);
  }
  auto cut = w.bytes();
  cut.resize(cut.size() - 3);
  try {
    ByteReader(cut).verify_seal();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorruptPayload);
  }
  ByteReader empty(std::span<const std::uint8_t>{});
  EXPECT_THROW(empty.get<std::uint64_t>(), Error);
}

TEST(Config, ParsesCommentsAndKeepsOrder) {
  const auto c = KeyValueConfig::parse("# header\nb = 2  # trailing\n\n a=  x y \n");
  ASSERT_EQ(c.entries().size(), 2u);
  EXPECT_EQ(c.entries()[0].first, "b");
  EXPECT_EQ(*c.get("b"), "2");
  EXPECT_EQ(*c.get("a"), "x y");
  EXPECT_FALSE(c.get("c"));
}

TEST(Config, DuplicateAndMalformedLinesRejected) {
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), Error);
  EXPECT_THROW(KeyValueConfig::parse("just text\n"), Error);
  EXPECT_THROW(KeyValueConfig::parse("= 3\n"), Error);
}

TEST(Config, AssignOverridesInPlace) {
  auto c = KeyValueConfig::parse("a = 1\nb = 2\n");
  c.assign("a", "9");
  c.assign("z", "0");
  EXPECT_EQ(c.to_string(), "a = 9\nb = 2\nz = 0\n");
  EXPECT_EQ(KeyValueConfig::parse(c.to_string()).entries(), c.entries());
}

TEST(Config, ScalarParsers) {
  EXPECT_EQ(parse_double(" 1e-4 "), 1e-4);
  EXPECT_FALSE(parse_double("1e-4x"));
  EXPECT_FALSE(parse_double(""));
  EXPECT_EQ(parse_int("-12"), -12);
  EXPECT_FALSE(parse_int("1.5"));
  EXPECT_EQ(parse_bool("yes"), true);
  EXPECT_EQ(parse_bool("off"), false);
  EXPECT_FALSE(parse_bool("maybe"));
  EXPECT_EQ(split_list(" a, b ,,c "), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Config, FormatDoubleRoundTrips) {
  Rng r(11);
  for (int i = 0; i < 2000; ++i) {
    const double v = (r.uniform() - 0.5) * std::pow(10.0, static_cast<double>(r.below(40)) - 20.0);
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1e-4), "0.0001");
}

TEST(Parallel, CoversEveryIndexOnceForAnyWorkerCount) {
  for (std::size_t workers : {1u, 2u, 3u, 8u}) {
    std::vector<int> hits(37, 0);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(10, 4,
                            [](std::size_t i) {
                              if (i == 7) throw Error(Errc::NonFiniteLoss, "x");
                            }),
               Error);
}
