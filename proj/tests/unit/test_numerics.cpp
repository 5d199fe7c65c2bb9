#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "cld/error.hpp"
#include "cld/numerics.hpp"

using namespace cld;

TEST(L2Normalize, ThreeFourFive) {
  Vector v = l2_normalize(std::vector<double>{3.0, 4.0});
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
}

TEST(L2Normalize, UnitVectorUnchanged) {
  Vector v = l2_normalize(std::vector<double>{1.0, 0.0});
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[1], 0.0);
}

TEST(L2Normalize, ZeroVectorThrows) {
  try {
    l2_normalize(std::vector<double>{0.0, 0.0});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate norm"), std::string::npos);
  }
}

TEST(L2Normalize, IdempotentOnRandomVectors) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    Vector v(1 + rng.uniform_index(20));
    for (double& x : v) x = rng.normal(0.0, 100.0);
    Vector once = l2_normalize(v);
    Vector twice = l2_normalize(once);
    EXPECT_NEAR(norm(once), 1.0, 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-12);
  }
}

TEST(L2NormalizeRows, ErrorNamesRow) {
  Matrix m(3, 2, 1.0);
  m(1, 0) = 0.0;
  m(1, 1) = 0.0;
  try {
    l2_normalize_rows(m);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(Cosine, Examples) {
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{2, 0}, std::vector<double>{1, 0}), 1.0);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 1}), 0.8, 1e-15);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), Error);
  EXPECT_THROW(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), Error);
}

TEST(Cosine, ScaleInvariantAndClamped) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    Vector a(5);
    Vector b(5);
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    double alpha = rng.uniform(1e-3, 1e3);
    double beta = rng.uniform(1e-3, 1e3);
    Vector sa = a;
    Vector sb = b;
    for (double& x : sa) x *= alpha;
    for (double& x : sb) x *= beta;
    double c = cosine_similarity(a, b);
    EXPECT_NEAR(c, cosine_similarity(sa, sb), 1e-12);
    EXPECT_LE(std::abs(c), 1.0);
  }
  EXPECT_LE(cosine_similarity(std::vector<double>{0.1, 0.1, 0.1}, std::vector<double>{0.3, 0.3, 0.3}), 1.0);
}

TEST(LogSumExp, Examples) {
  EXPECT_EQ(log_sum_exp(std::vector<double>{0.0}), 0.0);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{std::log(2.0), std::log(2.0)}), std::log(4.0), 1e-15);
  double big = log_sum_exp(std::vector<double>{1000.0, 1000.0});
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 1000.0 + std::numbers::ln2, 1e-12);
  EXPECT_THROW(log_sum_exp(std::vector<double>{}), Error);
}

TEST(LogSumExp, ShiftInvariance) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    Vector s(1 + rng.uniform_index(30));
    for (double& x : s) x = rng.uniform(-1e3, 1e3);
    double c = rng.uniform(-1e3, 1e3);
    Vector shifted = s;
    for (double& x : shifted) x += c;
    EXPECT_NEAR(log_sum_exp(shifted), log_sum_exp(s) + c, 1e-10);
  }
}

TEST(LogSumExp, MatchesNaiveSumOnModerateScores) {
  Rng rng(4);
  Vector s(10);
  for (double& x : s) x = rng.uniform(-5, 5);
  double naive = 0.0;
  for (double x : s) naive += std::exp(x);
  EXPECT_NEAR(log_sum_exp(s), std::log(naive), 1e-13);
}

TEST(MatrixOps, ProductsAgreeWithTriple) {
  Rng rng(5);
  Matrix a(3, 4);
  Matrix b(4, 2);
  for (double& x : a.data()) x = rng.normal();
  for (double& x : b.data()) x = rng.normal();
  Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-14);
    }
  }
  Matrix nt = matmul_nt(a, b.transposed());
  Matrix tn = matmul_tn(a.transposed(), b);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(nt.data()[i], c.data()[i], 1e-14);
    EXPECT_NEAR(tn.data()[i], c.data()[i], 1e-14);
  }
}

TEST(MatrixOps, SelectRowsAndIdentity) {
  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  std::vector<std::size_t> idx = {2, 0};
  Matrix s = m.select_rows(idx);
  EXPECT_EQ(s, Matrix::from_rows({{5, 6}, {1, 2}}));
  EXPECT_EQ(matmul(Matrix::identity(3), m), m);
}

TEST(SymmetricEigen, ReconstructsRandomMatrix) {
  Rng rng(6);
  const std::size_t n = 7;
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.normal();
  SymmetricEigen e = symmetric_eigen(a);
  for (std::size_t i = 1; i < n; ++i) EXPECT_LE(e.values[i - 1], e.values[i]);
  // A v = lambda v for every column, and V is orthonormal.
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double av = 0.0;
      for (std::size_t k = 0; k < n; ++k) av += a(i, k) * e.vectors(k, c);
      EXPECT_NEAR(av, e.values[c] * e.vectors(i, c), 1e-9);
    }
  }
  Matrix vtv = matmul_tn(e.vectors, e.vectors);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(vtv(i, j), i == j ? 1.0 : 0.0, 1e-10);
}

TEST(SymmetricEigen, DiagonalInput) {
  Matrix a = Matrix::from_rows({{3, 0, 0}, {0, -1, 0}, {0, 0, 2}});
  SymmetricEigen e = symmetric_eigen(a);
  EXPECT_NEAR(e.values[0], -1, 1e-15);
  EXPECT_NEAR(e.values[1], 2, 1e-15);
  EXPECT_NEAR(e.values[2], 3, 1e-15);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  Rng c(42);
  Rng d(42);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(c.normal(), d.normal());
}

TEST(Rng, EngineMatchesReferenceValue) {
  // 10000th output of mt19937_64 with the default seed 5489.
  Rng r(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = r.next_u64();
  EXPECT_EQ(x, 9981545732273789042ULL);
}

TEST(Rng, UniformRangeAndMoments) {
  Rng r(7);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  Rng r(8);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng r(9);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[r.uniform_index(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
}

TEST(Rng, SampleWithoutReplacementDistinct) {
  Rng r(10);
  for (int t = 0; t < 50; ++t) {
    std::size_t n = 1 + r.uniform_index(100);
    std::size_t m = r.uniform_index(n + 1);
    auto s = r.sample_without_replacement(n, m);
    ASSERT_EQ(s.size(), m);
    std::set<std::size_t> uniq(s.begin(), s.end());
    EXPECT_EQ(uniq.size(), m);
    for (auto v : s) EXPECT_LT(v, n);
  }
}

TEST(Rng, PermutationIsPermutation) {
  Rng r(11);
  auto p = r.permutation(100);
  std::set<std::size_t> uniq(p.begin(), p.end());
  EXPECT_EQ(uniq.size(), 100u);
  EXPECT_EQ(*uniq.rbegin(), 99u);
}

TEST(Rng, SplitStreamsDiffer) {
  Rng parent(12);
  Rng a = parent.split();
  Rng b = parent.split();
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(AllFinite, DetectsNanAndInf) {
  EXPECT_TRUE(all_finite(std::vector<double>{1, 2, 3}));
  EXPECT_FALSE(all_finite(std::vector<double>{1, NAN}));
  EXPECT_FALSE(all_finite(std::vector<double>{INFINITY}));
}
