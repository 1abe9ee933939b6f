#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "railkit/geometry.hpp"
#include "support.hpp"

using namespace railkit;

namespace {

WorldPrimitive wp(Shape s, Vec3 o, Vec3 axis = Vec3::UnitZ(), double r = 0.0) { return {s, o, axis, r}; }

WorldPrimitive random_world(std::mt19937_64& rng, Shape s) {
  std::uniform_real_distribution<double> u(0.05, 0.5);
  return wp(s, support::random_vec3(rng), support::random_unit(rng), s == Shape::Sphere ? u(rng) : 0.0);
}

Primitive random_local(std::mt19937_64& rng, Shape s, Attachment at) {
  std::uniform_real_distribution<double> u(0.02, 0.2);
  Primitive p{s, support::random_vec3(rng, 0.2), support::random_unit(rng), s == Shape::Sphere ? u(rng) : 0.0, at};
  p.attachment.pose = support::random_pose(rng, 0.1);
  return p;
}

const std::vector<std::pair<Shape, Shape>> kSupported = {
    {Shape::Point, Shape::Point},  {Shape::Point, Shape::Line},    {Shape::Point, Shape::Plane},
    {Shape::Point, Shape::Sphere}, {Shape::Line, Shape::Line},     {Shape::Sphere, Shape::Sphere},
    {Shape::Sphere, Shape::Plane}};

double relative_error(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(PairDistance, PointSphere) {
  const auto r = pair_distance(wp(Shape::Point, {0, 0, 0}), wp(Shape::Sphere, {0, 0, 3}, Vec3::UnitZ(), 1.0));
  EXPECT_DOUBLE_EQ(r.d, 2.0);
}

TEST(PairDistance, ParallelLines) {
  const auto r = pair_distance(wp(Shape::Line, {0, 0, 0}, Vec3::UnitX()), wp(Shape::Line, {0, 1, 0}, Vec3::UnitX()));
  EXPECT_DOUBLE_EQ(r.d, 1.0);
}

TEST(PairDistance, SkewLinesMatchSampling) {
  std::mt19937_64 rng(61);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_world(rng, Shape::Line);
    const auto b = random_world(rng, Shape::Line);
    const double sampled = oracle::line_line_sampled(a.origin, a.axis, b.origin, b.axis);
    EXPECT_NEAR(pair_distance(a, b).d, sampled, 1e-4);
  }
}

TEST(PairDistance, SignedForContainment) {
  EXPECT_DOUBLE_EQ(pair_distance(wp(Shape::Point, {0, 0, 0.5}), wp(Shape::Sphere, {0, 0, 0}, Vec3::UnitZ(), 1.0)).d,
                   -0.5);
  EXPECT_DOUBLE_EQ(pair_distance(wp(Shape::Point, {3, 2, -0.25}), wp(Shape::Plane, {0, 0, 0}, Vec3::UnitZ())).d,
                   -0.25);
  EXPECT_DOUBLE_EQ(
      pair_distance(wp(Shape::Sphere, {0, 0, 1}, Vec3::UnitZ(), 0.5), wp(Shape::Sphere, {0, 0, 0}, Vec3::UnitZ(), 0.75))
          .d,
      -0.25);
  EXPECT_DOUBLE_EQ(
      pair_distance(wp(Shape::Sphere, {0, 0, 1}, Vec3::UnitZ(), 0.5), wp(Shape::Plane, {0, 0, 0}, Vec3::UnitZ())).d, 0.5);
}

TEST(PairDistance, UnsupportedPairNamesShapes) {
  try {
    pair_distance(wp(Shape::Line, {0, 0, 0}), wp(Shape::Plane, {0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedPair);
    EXPECT_NE(std::string(e.what()).find("line-plane"), std::string::npos);
  }
  EXPECT_THROW(pair_distance(wp(Shape::Sphere, {0, 0, 0}, Vec3::UnitZ(), 1), wp(Shape::Line, {0, 0, 0})), Error);
  EXPECT_THROW(pair_distance(wp(Shape::Plane, {0, 0, 0}), wp(Shape::Plane, {0, 0, 1})), Error);
}

TEST(PairDistance, SymmetricBitForBit) {
  std::mt19937_64 rng(67);
  for (int i = 0; i < 500; ++i) {
    for (auto [sa, sb] : kSupported) {
      const auto a = random_world(rng, sa);
      const auto b = random_world(rng, sb);
      const auto ab = pair_distance(a, b);
      const auto ba = pair_distance(b, a);
      ASSERT_EQ(ab.d, ba.d) << to_string(sa) << "-" << to_string(sb);
      EXPECT_EQ(ab.witness_a, ba.witness_b);
      EXPECT_EQ(ab.normal, -ba.normal);
    }
  }
}

TEST(PairDistance, InvariantUnderRigidMotion) {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 300; ++i) {
    for (auto [sa, sb] : kSupported) {
      const Primitive a{sa, support::random_vec3(rng), support::random_unit(rng), sa == Shape::Sphere ? 0.3 : 0.0, {}};
      const Primitive b{sb, support::random_vec3(rng), support::random_unit(rng), sb == Shape::Sphere ? 0.2 : 0.0, {}};
      const Pose motion = support::random_pose(rng, 2.0);
      const double d0 = pair_distance(place(a, Pose::identity()), place(b, Pose::identity())).d;
      const double d1 = pair_distance(place(a, motion), place(b, motion)).d;
      ASSERT_NEAR(d0, d1, 1e-10);
    }
  }
}

TEST(PairDistance, WitnessesRealizeDistance) {
  std::mt19937_64 rng(73);
  for (int i = 0; i < 200; ++i) {
    for (auto [sa, sb] : kSupported) {
      const auto r = pair_distance(random_world(rng, sa), random_world(rng, sb));
      if (sa == Shape::Point && sb == Shape::Point) {
        EXPECT_NEAR((r.witness_a - r.witness_b).norm(), r.d, 1e-12);
      }
      EXPECT_NEAR(r.normal.norm(), 1.0, 1e-12);
    }
  }
}

TEST(DistanceJacobianEnv, LocalToAttachment) {
  std::mt19937_64 rng(79);
  const SerialChain chain = support::random_chain(rng, 3, false);
  const Primitive robot = Primitive::point({0.1, 0, 0}, Attachment::robot(0, 0));
  const Primitive env = Primitive::sphere({1, 1, 1}, 0.1, Attachment::environment());
  const auto dj = distance_jacobian_env(chain, support::random_q(rng, 3), robot, env);
  EXPECT_EQ(dj.row[1], 0.0);
  EXPECT_EQ(dj.row[2], 0.0);
}

TEST(DistanceJacobianEnv, RejectsWrongAttachment) {
  std::mt19937_64 rng(83);
  const SerialChain chain = support::random_chain(rng, 3);
  const Primitive env = Primitive::sphere({1, 1, 1}, 0.1);
  try {
    distance_jacobian_env(chain, VecX::Zero(3), env, env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AttachmentMismatch);
  }
  EXPECT_THROW(distance_jacobian_env(chain, VecX::Zero(3), Primitive::point({0, 0, 0}, Attachment::robot(0, 3)), env),
               Error);
}

TEST(DistanceJacobianEnv, MatchesFiniteDifferences) {
  std::mt19937_64 rng(89);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const SerialChain chain = support::random_chain(rng, 7);
    const VecX q = support::random_q(rng, 7);
    const std::size_t joint = static_cast<std::size_t>(trial % 7);
    for (auto [sa, sb] : kSupported) {
      const Primitive robot = random_local(rng, sa, Attachment::robot(0, joint));
      Primitive env = random_local(rng, sb, Attachment::environment());
      const auto dj = distance_jacobian_env(chain, q, robot, env);
      if (std::abs(dj.distance.d) < 1e-3) continue;
      if (sa == Shape::Line && sb == Shape::Line) {
        const Vec3 ua = place(robot, fk_prefix(chain, q, joint)).axis;
        if (ua.cross(place_environment(env).axis).norm() < 1e-2) continue;
      }
      const auto fd = oracle::central_difference(
          [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            return Eigen::VectorXd::Constant(
                1, pair_distance(place(robot, fk_prefix(chain, x, joint)), place_environment(env)).d);
          },
          q, 1e-7);
      ASSERT_LT(relative_error(dj.row, fd.row(0)), 1e-5) << to_string(sa) << "-" << to_string(sb);
      ++checked;
    }
  }
  EXPECT_GT(checked, 1500);
}

TEST(DistanceJacobianEnv, OutwardMotionIncreasesDistance) {
  // A prismatic joint along z carries a point straight away from a sphere below it.
  JointDesc j;
  j.kind = JointKind::Prismatic;
  const SerialChain chain(Pose::identity(), {j}, Pose::identity());
  const Primitive robot = Primitive::point({0, 0, 0}, Attachment::robot(0, 0));
  const Primitive env = Primitive::sphere({0, 0, -1}, 0.2);
  const auto dj = distance_jacobian_env(chain, VecX::Constant(1, 0.3), robot, env);
  EXPECT_GT(dj.row[0] * 0.1, 0.0);
  EXPECT_NEAR(dj.row[0], 1.0, 1e-12);
}

TEST(DistanceJacobianPair, ReducesToEnvironmentCaseAndMatchesFiniteDifferences) {
  std::mt19937_64 rng(97);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const SerialChain ca = support::random_chain(rng, 5), cb = support::random_chain(rng, 6);
    const VecX qa = support::random_q(rng, 5), qb = support::random_q(rng, 6);
    for (auto [sa, sb] : kSupported) {
      const Primitive pa = random_local(rng, sa, Attachment::robot(0, static_cast<std::size_t>(trial % 5)));
      const Primitive pb = random_local(rng, sb, Attachment::robot(1, static_cast<std::size_t>(trial % 6)));
      const auto dj = distance_jacobian_pair(ca, qa, pa, cb, qb, pb);
      if (std::abs(dj.distance.d) < 1e-3) continue;
      if (sa == Shape::Line && sb == Shape::Line &&
          place(pa, attachment_frame(ca, qa, pa)).axis.cross(place(pb, attachment_frame(cb, qb, pb)).axis).norm() <
              1e-2)
        continue;

      // Freeze B by turning its primitive into an environment primitive at its current world pose.
      Primitive frozen = pb;
      frozen.attachment = Attachment::environment(attachment_frame(cb, qb, pb) * pb.attachment.pose);
      const auto env = distance_jacobian_env(ca, qa, pa, frozen);
      EXPECT_LT((dj.row.head(5) - env.row).cwiseAbs().maxCoeff(), 1e-12);

      Eigen::VectorXd stacked(11);
      stacked << qa, qb;
      const auto fd = oracle::central_difference(
          [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            const VecX xa = x.head(5), xb = x.tail(6);
            return Eigen::VectorXd::Constant(
                1, pair_distance(place(pa, attachment_frame(ca, xa, pa)), place(pb, attachment_frame(cb, xb, pb))).d);
          },
          stacked, 1e-7);
      ASSERT_LT(relative_error(dj.row, fd.row(0)), 1e-5);

      const auto swapped = distance_jacobian_pair(cb, qb, pb, ca, qa, pa);
      Eigen::RowVectorXd permuted(11);
      permuted << swapped.row.tail(5), swapped.row.head(6);
      EXPECT_LT((permuted - dj.row).cwiseAbs().maxCoeff(), 1e-12);
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}
