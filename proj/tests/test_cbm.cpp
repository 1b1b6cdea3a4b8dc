#include <gtest/gtest.h>

#include <cmath>

#include "cbias/cbm.hpp"
#include "cbias/verify.hpp"

using namespace cbias;
using cbm::Matrix;

namespace {

cbm::Params identity_instance() {
  cbm::Params p;
  p.dims = {2, 2, 1};
  p.embed = Matrix::Identity(2, 2);
  p.query = Matrix::Identity(2, 2);
  p.output = Matrix::Identity(2, 2);
  return p;
}

}  // namespace

TEST(Cbm, HandComputedAttention) {
  auto p = identity_instance();
  Matrix x(1, 2);
  x << 1.0, 0.0;
  auto f = cbm::forward(p, x);
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double a0 = e / (e + 1.0), a1 = 1.0 / (e + 1.0);
  EXPECT_NEAR(f.attention(0, 0), a0, 1e-12);
  EXPECT_NEAR(f.attention(0, 1), a1, 1e-12);
  EXPECT_NEAR(f.attention(0, 0), 0.6699, 1e-3);
  EXPECT_NEAR(f.attention(0, 1), 0.3301, 1e-3);
  EXPECT_NEAR(f.out(0, 0), 1.0 + a0, 1e-12);
  EXPECT_NEAR(f.out(0, 1), a1, 1e-12);
  EXPECT_NEAR(f.out(0, 0), 1.6699, 1e-3);
  EXPECT_NEAR(f.out(0, 1), 0.3301, 1e-3);
}

TEST(Cbm, ZeroEmbeddingIsIdentity) {
  auto p = cbm::init_params({6, 4, 3}, 1);
  p.embed.setZero();
  std::mt19937_64 rng(2);
  Matrix x = cbm::uniform_matrix(rng, 7, 6, -1.0, 1.0);
  auto f = cbm::forward(p, x);
  for (Eigen::Index r = 0; r < f.attention.rows(); ++r)
    for (Eigen::Index c = 0; c < f.attention.cols(); ++c) EXPECT_DOUBLE_EQ(f.attention(r, c), 0.25);
  EXPECT_EQ(f.out, x);
}

TEST(Cbm, ZeroOutputProjectionIsIdentity) {
  auto p = cbm::init_params({5, 3, 2}, 4);
  p.output.setZero();
  std::mt19937_64 rng(5);
  Matrix x = cbm::uniform_matrix(rng, 4, 5, -1.0, 1.0);
  EXPECT_EQ(cbm::forward(p, x).out, x);
}

TEST(Cbm, EmptyInput) {
  auto p = cbm::init_params({4, 3, 2}, 0);
  auto f = cbm::forward(p, Matrix(0, 4));
  EXPECT_EQ(f.out.rows(), 0);
  EXPECT_EQ(f.attention.rows(), 0);
  EXPECT_EQ(f.attention.cols(), 3);
}

TEST(Cbm, AttentionRowsSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = cbm::init_params({8, 5, 6}, seed);
    std::mt19937_64 rng(seed + 50);
    Matrix x = cbm::uniform_matrix(rng, 9, 8, -3.0, 3.0);
    auto f = cbm::forward(p, x);
    for (Eigen::Index r = 0; r < f.attention.rows(); ++r) {
      EXPECT_NEAR(f.attention.row(r).sum(), 1.0, 1e-9);
      EXPECT_GE(f.attention.row(r).minCoeff(), 0.0);
    }
  }
}

TEST(Cbm, GradientCheckAcrossSeeds) {
  auto r = verify::cbm_suite(0, 20, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_LT(r.worst, 1e-4);
}

TEST(Cbm, ZeroInputGivesZeroQueryGradient) {
  auto p = cbm::init_params({4, 3, 2}, 9);
  Matrix x = Matrix::Zero(5, 4);
  auto g = cbm::backward(p, x);
  EXPECT_EQ(g.query.cwiseAbs().maxCoeff(), 0.0);
  auto check = cbm::grad_check(p, x, 1e-5);
  EXPECT_LT(check.max_abs_error, 1e-8);
}

TEST(Cbm, NullRowInfluenceFollowsAttention) {
  auto p = cbm::init_params({4, 3, 2}, 3);
  std::mt19937_64 rng(6);
  Matrix x = cbm::uniform_matrix(rng, 2, 4, -1.0, 1.0);
  auto base = cbm::forward(p, x);
  ASSERT_GT(base.attention.col(2).minCoeff(), 0.0);
  auto q = p;
  q.embed.row(2).array() += 0.25;
  EXPECT_GT((cbm::forward(q, x).out - base.out).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cbm, ParameterCounts) {
  EXPECT_EQ(cbm::param_count(256, 64, 73), 74u * 64 + 256u * 64 + 64u * 256);
  EXPECT_EQ(cbm::param_count(256, 64, 73), 37504u);
  EXPECT_LT(cbm::param_count(256, 64, 73), 40000u);
  EXPECT_EQ(cbm::param_count(256, 64, 0), 32832u);
  auto p = cbm::init_params({256, 64, 73}, 0);
  EXPECT_EQ(static_cast<std::size_t>(p.embed.size() + p.query.size() + p.output.size()), 37504u);
}

TEST(Cbm, JsonRoundTrip) {
  auto p = cbm::init_params({4, 3, 2}, 11);
  auto back = cbm::params_from_json(nlohmann::json::parse(cbm::to_json(p).dump()));
  EXPECT_EQ(back.embed, p.embed);
  EXPECT_EQ(back.query, p.query);
  EXPECT_EQ(back.output, p.output);
  EXPECT_EQ(back.seed, 11u);
}

TEST(Cbm, DimensionMismatch) {
  auto p = cbm::init_params({4, 3, 2}, 0);
  try {
    cbm::forward(p, Matrix::Zero(2, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  auto j = cbm::to_json(p);
  j["query"].erase(0);
  try {
    cbm::params_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  EXPECT_THROW(cbm::grad_check(p, Matrix::Zero(1, 4), 1e-2), Error);
}
