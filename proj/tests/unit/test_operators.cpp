#include "mmfitz/operators.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mmfitz {
namespace {

using testing::operator_zoo;
using testing::Rng;

Vec v1(double a) { return Vec::Constant(1, a); }

// Scalar bisection on y + eps * w * sign(y) = x, the set-valued sign handled by bracketing.
double soft_threshold_oracle(double x, double eps, double w) {
  auto residual_lo = [&](double y) { return y + eps * w * (y > 0 ? 1.0 : (y < 0 ? -1.0 : -1.0)) - x; };
  auto residual_hi = [&](double y) { return y + eps * w * (y > 0 ? 1.0 : (y < 0 ? -1.0 : 1.0)) - x; };
  if (residual_lo(0.0) <= 0.0 && residual_hi(0.0) >= 0.0) return 0.0;
  double lo = -std::abs(x) - 1.0;
  double hi = std::abs(x) + 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (residual_hi(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(Resolvent, BoxClampsIndependentlyOfEps) {
  const auto op = OperatorSpec::normal_cone_box(v1(0.0), v1(1.0));
  EXPECT_DOUBLE_EQ(resolvent(op, 0.5, v1(2.0))[0], 1.0);
  EXPECT_DOUBLE_EQ(resolvent(op, 7.0, v1(2.0))[0], 1.0);
}

TEST(Resolvent, SoftThresholdMatchesBisection) {
  const auto op = OperatorSpec::abs_sum(v1(1.0));
  EXPECT_DOUBLE_EQ(resolvent(op, 0.5, v1(0.2))[0], 0.0);
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-3.0, 3.0);
    const double eps = rng.uniform(0.05, 2.0);
    EXPECT_NEAR(resolvent(op, eps, v1(x))[0], soft_threshold_oracle(x, eps, 1.0), 1e-12);
  }
}

TEST(Resolvent, ScaledIdentityHalves) {
  EXPECT_DOUBLE_EQ(resolvent(OperatorSpec::scaled_identity(1.0, 1), 1.0, v1(4.0))[0], 2.0);
}

TEST(Resolvent, LinearSolvesSystem) {
  Mat m(2, 2);
  m << 2.0, 1.0, -1.0, 1.0;
  const Vec x = (Vec(2) << 1.0, -2.0).finished();
  const Vec y = resolvent(OperatorSpec::linear(m), 0.3, x);
  EXPECT_LT((y + 0.3 * m * y - x).norm(), 1e-14);
}

TEST(Resolvent, SumGeneralSatisfiesInclusion) {
  Mat m(2, 2);
  m << 1.0, 0.5, -0.5, 2.0;
  const auto op = OperatorSpec::sum(LinearMonotone{m}, SubdiffAbsSum{Vec::Ones(2)});
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Vec x = rng.uniform_vec(2, -4.0, 4.0);
    const double eps = 0.2;
    const Vec y = resolvent(op, eps, x);
    // (x - y)/eps - M y must lie in the subdifferential of |.|_1 at y
    const Vec a = (x - y) / eps - m * y;
    for (Eigen::Index j = 0; j < 2; ++j) {
      if (std::abs(y[j]) > 1e-10) {
        EXPECT_NEAR(a[j], y[j] > 0 ? 1.0 : -1.0, 1e-8);
      } else {
        EXPECT_LE(std::abs(a[j]), 1.0 + 1e-8);
      }
    }
  }
}

TEST(Resolvent, SumIterationCapReportsResidual) {
  Mat m(2, 2);
  m << 1.0, 3.0, -3.0, 1.0;
  const auto op = OperatorSpec::sum(LinearMonotone{m}, SubdiffAbsSum{Vec::Ones(2)});
  ResolventOptions opts;
  opts.max_iterations = 3;
  try {
    resolvent(op, 1.0, (Vec(2) << 5.0, -5.0).finished(), opts);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.last_residual(), 0.0);
  }
}

TEST(Resolvent, RejectsBadInput) {
  const auto op = OperatorSpec::half_line(1);
  EXPECT_THROW(resolvent(op, 0.0, v1(1.0)), PreconditionError);
  EXPECT_THROW(resolvent(op, -1.0, v1(1.0)), PreconditionError);
  EXPECT_THROW(resolvent(op, 1.0, Vec::Zero(2)), PreconditionError);
}

TEST(OperatorSpec, ValidatesParameters) {
  EXPECT_THROW(OperatorSpec::normal_cone_box(v1(1.0), v1(0.0)), PreconditionError);
  EXPECT_THROW(OperatorSpec::normal_cone_ball(Vec::Zero(2), 0.0), PreconditionError);
  EXPECT_THROW(OperatorSpec::abs_sum(v1(-1.0)), PreconditionError);
  EXPECT_THROW(OperatorSpec::scaled_identity(-1.0, 1), PreconditionError);
  EXPECT_THROW(OperatorSpec::linear(-Mat::Identity(2, 2)), PreconditionError);
  EXPECT_THROW(OperatorSpec::sum(LinearMonotone{Mat::Identity(2, 2)}, SubdiffAbsSum{Vec::Ones(3)}), PreconditionError);
}

TEST(OperatorSpec, ClassifiesKinds) {
  EXPECT_TRUE(OperatorSpec::half_line(1).is_normal_cone());
  EXPECT_TRUE(OperatorSpec::half_line(1).has_solid_cone_domain());
  EXPECT_FALSE(OperatorSpec::abs_sum(v1(1.0)).has_constrained_domain());
  Mat skew(2, 2);
  skew << 0.0, 1.0, -1.0, 0.0;
  EXPECT_FALSE(OperatorSpec::linear(skew).is_subdifferential());
  EXPECT_THROW(OperatorSpec::linear(skew).potential(Vec::Zero(2)), PreconditionError);
  EXPECT_EQ(OperatorSpec::half_line(1).potential(v1(-1.0)), kInf);
  EXPECT_DOUBLE_EQ(OperatorSpec::abs_sum(v1(2.0)).potential(v1(-1.5)), 3.0);
}

TEST(Yosida, HalfLineBoundaryAndInterior) {
  const auto op = OperatorSpec::half_line(1);
  const auto out = yosida(op, 0.1, v1(-0.5));
  EXPECT_DOUBLE_EQ(out.jx[0], 0.0);
  EXPECT_NEAR(out.ax[0], -5.0, 1e-14);
  const auto in = yosida(op, 0.1, v1(0.5));
  EXPECT_DOUBLE_EQ(in.jx[0], 0.5);
  EXPECT_DOUBLE_EQ(in.ax[0], 0.0);
}

TEST(Yosida, ScaledIdentityPair) {
  const auto out = yosida(OperatorSpec::scaled_identity(1.0, 1), 0.5, v1(3.0));
  EXPECT_DOUBLE_EQ(out.jx[0], 2.0);
  EXPECT_DOUBLE_EQ(out.ax[0], 2.0);
}

TEST(GraphSample, EmptyAndDeterministic) {
  const auto op = OperatorSpec::half_line(1);
  const SamplingBox box{v1(-1.0), v1(1.0)};
  EXPECT_TRUE(graph_sample(op, box, 0, 1.0, 3).empty());
  const auto a = graph_sample(op, box, 20, 1.0, 3);
  const auto b = graph_sample(op, box, 20, 1.0, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_EQ(a[i].ustar, b[i].ustar);
  }
}

TEST(GraphSample, ScaledIdentityPairsOnDiagonal) {
  const auto pairs = graph_sample(OperatorSpec::scaled_identity(1.0, 2), testing::cube(2, 3.0), 100, 0.7, 9);
  for (const auto& p : pairs) EXPECT_LT((p.u - p.ustar).norm(), 1e-14);
}

TEST(GraphSample, BoxSamplesInsideDomain) {
  const auto pairs = graph_sample(OperatorSpec::normal_cone_box(Vec::Zero(2), Vec::Ones(2)), testing::cube(2, 3.0), 500,
                                  1.0, 4);
  for (const auto& p : pairs) {
    EXPECT_GE(p.u.minCoeff(), 0.0);
    EXPECT_LE(p.u.maxCoeff(), 1.0);
  }
}

TEST(GraphSample, RejectsDegenerateBox) {
  EXPECT_THROW(graph_sample(OperatorSpec::half_line(1), SamplingBox{v1(1.0), v1(1.0)}, 3, 1.0, 0), PreconditionError);
}

TEST(Monotonicity, Certificates) {
  const std::vector<GraphPair> anti{{v1(0.0), v1(1.0)}, {v1(1.0), v1(0.0)}};
  EXPECT_DOUBLE_EQ(monotonicity_certificate(anti), -1.0);
  EXPECT_THROW(monotonicity_certificate(std::span<const GraphPair>(anti.data(), 1)), PreconditionError);
  for (const auto& [name, op] : operator_zoo()) {
    const auto pairs = graph_sample(op, testing::cube(op.dim(), 4.0), 200, 0.8, 21);
    EXPECT_GE(monotonicity_certificate(pairs), -1e-12) << name;
  }
}

TEST(Monotonicity, ScaledIdentityEqualsMinSquaredDistance) {
  const auto pairs = graph_sample(OperatorSpec::scaled_identity(1.0, 1), testing::cube(1, 2.0), 30, 1.0, 2);
  double expected = kInf;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) expected = std::min(expected, (pairs[i].u - pairs[j].u).squaredNorm());
  }
  EXPECT_NEAR(monotonicity_certificate(pairs), expected, 1e-15);
}

TEST(Properties, NonexpansiveAndYosidaLipschitz) {
  Rng rng(101);
  for (const auto& [name, op] : operator_zoo()) {
    for (int i = 0; i < 1000; ++i) {
      const Vec x = rng.uniform_vec(op.dim(), -5.0, 5.0);
      const Vec y = rng.uniform_vec(op.dim(), -5.0, 5.0);
      const double eps = rng.uniform(0.05, 2.0);
      const auto px = yosida(op, eps, x);
      const auto py = yosida(op, eps, y);
      ASSERT_LE((px.jx - py.jx).norm(), (x - y).norm() + 1e-10) << name;
      ASSERT_LE((px.ax - py.ax).norm(), (x - y).norm() / eps + 1e-10) << name;
    }
  }
}

TEST(Properties, NormalConeInclusionIsExact) {
  Rng rng(17);
  const Vec lo = Vec::Zero(2);
  const Vec hi = Vec::Ones(2);
  const auto box = OperatorSpec::normal_cone_box(lo, hi);
  const Vec c = (Vec(2) << 0.5, -0.5).finished();
  const auto ball = OperatorSpec::normal_cone_ball(c, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const Vec x = rng.uniform_vec(2, -4.0, 4.0);
    const auto pb = yosida(box, 0.3, x);
    for (Eigen::Index j = 0; j < 2; ++j) {
      if (pb.jx[j] > lo[j] && pb.jx[j] < hi[j]) EXPECT_NEAR(pb.ax[j], 0.0, 1e-10);
      if (pb.ax[j] > 1e-10) EXPECT_EQ(pb.jx[j], hi[j]);
      if (pb.ax[j] < -1e-10) EXPECT_EQ(pb.jx[j], lo[j]);
    }
    const auto pl = yosida(ball, 0.3, x);
    const Vec r = pl.jx - c;
    if (r.norm() < 1.5 - 1e-10) {
      EXPECT_LT(pl.ax.norm(), 1e-10);
    } else {
      // outward normal: a = lambda r, lambda >= 0
      EXPECT_GE(pl.ax.dot(r), -1e-10);
      EXPECT_NEAR(pl.ax[0] * r[1] - pl.ax[1] * r[0], 0.0, 1e-10);
    }
  }
}

TEST(Properties, ResolventIdentity) {
  Rng rng(23);
  for (const auto& [name, op] : operator_zoo()) {
    for (double eps : {0.1, 1.0}) {
      for (double delta : {0.1, 1.0}) {
        for (int i = 0; i < 100; ++i) {
          const Vec x = rng.uniform_vec(op.dim(), -5.0, 5.0);
          const Vec j = resolvent(op, eps, x);
          const Vec z = (delta / eps) * x + (1.0 - delta / eps) * j;
          ASSERT_LT((j - resolvent(op, delta, z)).norm(), 1e-9) << name << " eps=" << eps << " delta=" << delta;
        }
      }
    }
  }
}

TEST(YosidaResolvent, InvertsPenalizedStep) {
  Rng rng(3);
  for (const auto& [name, op] : operator_zoo()) {
    for (int i = 0; i < 50; ++i) {
      const Vec x = rng.uniform_vec(op.dim(), -3.0, 3.0);
      const double eps = 0.05;
      const double lambda = 0.2;
      const Vec y = yosida_resolvent(op, eps, lambda, x);
      EXPECT_LT((y + lambda * yosida(op, eps, y).ax - x).norm(), 1e-9) << name;
    }
  }
}

}  // namespace
}  // namespace mmfitz
