#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <map>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "railkit/controller.hpp"
#include "railkit/vfi.hpp"
#include "support.hpp"

using namespace railkit;

namespace {

const char* kFigureEntries = R"(
- vfi_type: environment_to_robot
  cs_entity_environment: { point: [0, 0, 0], direction: [0, 0, 1] }
  cs_entity_robot: { point: [0, 0, 0] }
  entity_environment_primitive_type: line
  entity_robot_primitive_type: point
  robot_index: 4
  joint_index: 2
  safe_distance: 0.3
  direction: keepout
- vfi_type: robot_to_robot
  cs_entity_one: { center: [0, 0, 0], radius: 0.05 }
  cs_entity_two: { center: [0, 0, 0], radius: 0.05 }
  entity_one_primitive_type: sphere
  entity_two_primitive_type: sphere
  robot_index_one: 2
  robot_index_two: 1
  joint_index_one: 1
  joint_index_two: 1
  safe_distance: 0.02
  direction: keepout
)";

// One prismatic joint along world z; a point on it sits at (0, 0, q).
RobotSystem slider() {
  JointDesc j;
  j.kind = JointKind::Prismatic;
  j.q_min = -5;
  j.q_max = 5;
  return RobotSystem{{compose({SerialChain(Pose::identity(), {j}, Pose::identity())})}};
}

VfiSpec slider_vs_point(double z_env, double safe, VfiDirection dir, double gain) {
  VfiSpec s;
  s.first = Primitive::point({0, 0, 0}, Attachment::robot(0, 0));
  s.second = Primitive::point({0, 0, z_env});
  s.safe_distance = safe;
  s.direction = dir;
  s.gain = gain;
  return s;
}

Error parse_error(const std::string& text, const RobotSystem* system = nullptr) {
  try {
    parse_vfi_config(text, system);
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected a parse error";
  return Error(ErrorCode::ParseError, "none");
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST(VfiParse, FigureEntries) {
  const auto specs = parse_vfi_config(kFigureEntries);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].type, VfiType::EnvironmentToRobot);
  EXPECT_EQ(specs[0].first.shape, Shape::Point);
  EXPECT_EQ(specs[0].first.attachment.branch, 3u);
  EXPECT_EQ(specs[0].first.attachment.joint, 1u);
  EXPECT_EQ(specs[0].second.shape, Shape::Line);
  EXPECT_EQ(specs[0].second.attachment.kind, Attachment::Kind::Environment);
  EXPECT_EQ(specs[0].line, 2);

  EXPECT_EQ(specs[1].type, VfiType::RobotToRobot);
  EXPECT_EQ(specs[1].first.shape, Shape::Sphere);
  EXPECT_EQ(specs[1].first.attachment.branch, 1u);
  EXPECT_EQ(specs[1].first.attachment.joint, 0u);
  EXPECT_EQ(specs[1].second.attachment.branch, 0u);
  EXPECT_DOUBLE_EQ(specs[1].first.radius, 0.05);
  EXPECT_DOUBLE_EQ(specs[1].safe_distance, 0.02);
  EXPECT_FALSE(specs[1].gain.has_value());
}

TEST(VfiParse, EmptyDocuments) {
  EXPECT_TRUE(parse_vfi_config("").empty());
  EXPECT_TRUE(parse_vfi_config("[]").empty());
  EXPECT_TRUE(parse_vfi_config("# nothing here\n").empty());
}

TEST(VfiParse, RejectsUnknownKey) {
  const auto e = parse_error(replace(kFigureEntries, "  direction: keepout\n- vfi", "  colour: red\n  direction: keepout\n- vfi"));
  EXPECT_EQ(e.code(), ErrorCode::UnknownKey);
  EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  EXPECT_EQ(e.line(), 10);
}

TEST(VfiParse, RejectsKeysOfTheOtherShape) {
  const auto e = parse_error(replace(kFigureEntries, "  robot_index: 4", "  robot_index_one: 4"));
  EXPECT_EQ(e.code(), ErrorCode::UnknownKey);
  EXPECT_NE(std::string(e.what()).find("robot_index_one"), std::string::npos);
}

TEST(VfiParse, MissingField) {
  const auto e = parse_error(replace(kFigureEntries, "  safe_distance: 0.3\n", ""));
  EXPECT_EQ(e.code(), ErrorCode::MissingField);
  EXPECT_NE(std::string(e.what()).find("safe_distance"), std::string::npos);
}

TEST(VfiParse, Indices) {
  EXPECT_EQ(parse_error(replace(kFigureEntries, "robot_index: 4", "robot_index: 0")).code(),
            ErrorCode::IndexOutOfRange);
  const RobotSystem platform = support::load_platform();
  EXPECT_NO_THROW(parse_vfi_config(kFigureEntries, &platform));
  const auto e = parse_error(replace(kFigureEntries, "robot_index: 4", "robot_index: 5"), &platform);
  EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(parse_error(replace(kFigureEntries, "joint_index_one: 1", "joint_index_one: 9"), &platform).code(),
            ErrorCode::IndexOutOfRange);
  EXPECT_NO_THROW(parse_vfi_config(replace(kFigureEntries, "joint_index_one: 1", "joint_index_one: 8"), &platform));
}

TEST(VfiParse, RejectsBadValues) {
  EXPECT_EQ(parse_error(replace(kFigureEntries, "safe_distance: 0.3", "safe_distance: 0")).code(),
            ErrorCode::ParseError);
  EXPECT_EQ(parse_error(replace(kFigureEntries, "direction: keepout", "direction: sideways")).code(),
            ErrorCode::ParseError);
  EXPECT_EQ(parse_error(replace(kFigureEntries, "vfi_type: robot_to_robot", "vfi_type: robot")).code(),
            ErrorCode::ParseError);
  EXPECT_EQ(parse_error(replace(kFigureEntries, "robot_index_two: 1", "robot_index_two: 2")).code(),
            ErrorCode::ParseError);
  EXPECT_EQ(parse_error(replace(kFigureEntries, "entity_environment_primitive_type: line",
                                "entity_environment_primitive_type: plane"))
                .code(),
            ErrorCode::UnknownKey);
  EXPECT_EQ(parse_error("- vfi_type: [").code(), ErrorCode::ParseError);
  EXPECT_EQ(parse_error("vfi_type: robot_to_robot\n").code(), ErrorCode::ParseError);
}

TEST(VfiParse, UnsupportedPair) {
  const std::string text = replace(replace(kFigureEntries, "entity_robot_primitive_type: point",
                                           "entity_robot_primitive_type: line"),
                                   "cs_entity_robot: { point: [0, 0, 0] }",
                                   "cs_entity_robot: { direction: [1, 0, 0] }");
  EXPECT_NO_THROW(parse_vfi_config(text));
  const std::string plane = replace(replace(text, "entity_environment_primitive_type: line",
                                            "entity_environment_primitive_type: plane"),
                                    "{ point: [0, 0, 0], direction: [0, 0, 1] }", "{ normal: [0, 0, 1] }");
  EXPECT_EQ(parse_error(plane).code(), ErrorCode::UnsupportedPair);
}

TEST(VfiParse, PlatformFileHas31Entries) {
  const RobotSystem platform = support::load_platform();
  const auto specs = parse_vfi_config(support::read_data("vfi/platform.yaml"), &platform);
  EXPECT_EQ(specs.size(), 31u);
}

TEST(VfiLint, ReportsEveryBadEntry) {
  std::string text = replace(kFigureEntries, "robot_index: 4", "robot_index: 0");
  text = replace(text, "joint_index_two: 1", "joint_index_two: 1\n  extra: 1");
  text += "- vfi_type: environment_to_robot\n";
  const auto report = lint_vfi_config(text);
  ASSERT_EQ(report.entries.size(), 3u);
  EXPECT_FALSE(report.ok());
  EXPECT_EQ(report.valid_count(), 0u);
  EXPECT_NE(report.entries[0].message.find("IndexOutOfRange"), std::string::npos);
  EXPECT_EQ(report.entries[0].line, 7);
  EXPECT_NE(report.entries[1].message.find("extra"), std::string::npos);
  EXPECT_NE(report.entries[2].message.find("MissingField"), std::string::npos);

  EXPECT_TRUE(lint_vfi_config(kFigureEntries).ok());
  EXPECT_TRUE(lint_vfi_config("").ok());
  EXPECT_TRUE(lint_vfi_config("").entries.empty());
  EXPECT_FALSE(lint_vfi_config("{ a: 1 }").ok());
}

TEST(BuildConstraint, KeepoutBoundFormula) {
  const RobotSystem s = slider();
  const auto row = build_constraint(slider_vs_point(-1.0, 0.05, VfiDirection::Keepout, 1.0), s, VecX::Zero(1));
  EXPECT_DOUBLE_EQ(row.distance, 1.0);
  EXPECT_DOUBLE_EQ(row.bound, 0.95);
  // d grows with q, so -J has coefficient -1.
  EXPECT_DOUBLE_EQ(row.coefficients[0], -1.0);
}

TEST(BuildConstraint, BoundaryForbidsApproach) {
  const RobotSystem s = slider();
  const auto row = build_constraint(slider_vs_point(-0.05, 0.05, VfiDirection::Keepout, 2.0), s, VecX::Zero(1));
  EXPECT_DOUBLE_EQ(row.bound, 0.0);
  // Any approach velocity (qdot < 0) violates the row.
  EXPECT_GT(row.coefficients[0] * -1e-3, row.bound);
}

TEST(BuildConstraint, KeepinSignsAndDefaultGain) {
  const RobotSystem s = slider();
  VfiSpec spec = slider_vs_point(-1.0, 2.0, VfiDirection::Keepin, 1.0);
  spec.gain.reset();
  const auto row = build_constraint(spec, s, VecX::Zero(1));
  EXPECT_DOUBLE_EQ(row.bound, kDefaultVfiGain * (2.0 - 1.0));
  EXPECT_DOUBLE_EQ(row.coefficients[0], 1.0);
  EXPECT_DOUBLE_EQ(build_constraint(spec, s, VecX::Zero(1), 5.0).bound, 5.0);
}

TEST(BuildConstraint, CoefficientsAreNegatedDistanceGradient) {
  const RobotSystem platform = support::load_platform();
  const auto specs = parse_vfi_config(support::read_data("vfi/platform.yaml"), &platform);
  std::mt19937_64 rng(151);
  const VecX home = support::platform_home(platform);
  for (int trial = 0; trial < 10; ++trial) {
    const VecX q = home + support::random_q(rng, platform.total_dof(), 0.3);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto row = build_constraint(specs[i], platform, q);
      if (std::abs(row.distance) < 1e-3) continue;
      const auto fd = oracle::central_difference(
          [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            return Eigen::VectorXd::Constant(1, build_constraint(specs[i], platform, x).distance);
          },
          q, 1e-7);
      const double sign = specs[i].direction == VfiDirection::Keepout ? -1.0 : 1.0;
      const Eigen::RowVectorXd expected = sign * fd.row(0);
      ASSERT_LT((row.coefficients - expected).cwiseAbs().maxCoeff() / std::max(1.0, expected.cwiseAbs().maxCoeff()),
                1e-5)
          << "entry " << i;
    }
  }
}

TEST(Assemble, LimitRowsOnly) {
  JointDesc j;
  j.q_min = -1.0;
  j.q_max = 2.0;
  j.velocity_limit = 0.5;
  const RobotSystem s{{compose({SerialChain(Pose::identity(), {j, j}, Pose::identity())})}};
  VecX q(2);
  q << 0.5, -0.5;
  const auto set = assemble({}, s, q, {2.0, 3.0});
  ASSERT_EQ(set.Ws.rows(), 8);
  EXPECT_EQ(set.Wp.rows(), 0);
  EXPECT_EQ(set.vfi_row_count(), 0u);
  // joint 0: qdot >= 3(-1 - 0.5), qdot <= 3(2 - 0.5), |qdot| <= 0.5
  EXPECT_DOUBLE_EQ(set.Ws(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(set.ws[0], 4.5);
  EXPECT_DOUBLE_EQ(set.ws[1], 4.5);
  EXPECT_DOUBLE_EQ(set.ws[2], 0.5);
  EXPECT_DOUBLE_EQ(set.ws[3], 0.5);
  EXPECT_DOUBLE_EQ(set.Ws(4, 1), -1.0);
  EXPECT_DOUBLE_EQ(set.ws[4], 1.5);
  EXPECT_DOUBLE_EQ(set.ws[5], 7.5);
  EXPECT_EQ(set.single_origin[5].kind, RowKind::PositionUpper);
  EXPECT_EQ(set.single_origin[5].joint, 1u);
}

TEST(Assemble, PlatformStructure) {
  const RobotSystem platform = support::load_platform();
  const auto specs = parse_vfi_config(support::read_data("vfi/platform.yaml"), &platform);
  const VecX q = support::platform_home(platform);
  const auto set = assemble(specs, platform, q);

  EXPECT_EQ(set.vfi_row_count(), 31u);
  EXPECT_EQ(set.Wp.rows(), 18);
  EXPECT_EQ(set.Ws.rows(), static_cast<Eigen::Index>(4 * 34 + 13));
  EXPECT_EQ(static_cast<std::size_t>(set.Ws.rows()), set.single_origin.size());
  EXPECT_EQ(static_cast<std::size_t>(set.Wp.rows()), set.pair_origin.size());

  // Block diagonality: each single-branch row touches one branch only.
  for (Eigen::Index r = 0; r < set.Ws.rows(); ++r) {
    std::set<std::size_t> touched;
    for (std::size_t b = 0; b < platform.branch_count(); ++b) {
      const auto seg = set.Ws.row(r).segment(static_cast<Eigen::Index>(platform.offset(b)),
                                             static_cast<Eigen::Index>(platform.branches[b].dof()));
      if (seg.cwiseAbs().maxCoeff() > 0.0) touched.insert(b);
    }
    ASSERT_EQ(touched.size(), 1u) << "row " << r;
    EXPECT_EQ(*touched.begin(), set.single_origin[static_cast<std::size_t>(r)].branch);
  }

  // Provenance: every VFI appears exactly once, every limit row once per joint and kind.
  std::vector<int> seen(specs.size(), 0);
  std::map<std::tuple<std::size_t, std::size_t, RowKind>, int> limits;
  for (const auto& o : set.single_origin) {
    if (o.kind == RowKind::Vfi) {
      ++seen[o.vfi];
    } else {
      ++limits[{o.branch, o.joint, o.kind}];
    }
  }
  for (const auto& o : set.pair_origin) ++seen[o.vfi];
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_EQ(limits.size(), 4u * 34u);

  // The home configuration is strictly inside the safe set.
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].direction == VfiDirection::Keepout) {
      EXPECT_GT(set.vfi_distance[i], specs[i].safe_distance) << "entry " << i;
    } else {
      EXPECT_LT(set.vfi_distance[i], specs[i].safe_distance) << "entry " << i;
    }
  }
  EXPECT_TRUE((set.ws.array() > 0.0).all());
  EXPECT_TRUE((set.wp.array() > 0.0).all());
}

TEST(Assemble, PermutedSpecsGivePermutedRowsAndSameSolution) {
  const RobotSystem platform = support::load_platform();
  const auto specs = parse_vfi_config(support::read_data("vfi/platform.yaml"), &platform);
  std::mt19937_64 rng(157);
  const VecX q = support::platform_home(platform) + support::random_q(rng, platform.total_dof(), 0.05);

  std::vector<std::size_t> perm(specs.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<VfiSpec> permuted;
  for (auto i : perm) {
    VfiSpec s = specs[i];
    if (s.type == VfiType::RobotToRobot) std::swap(s.first, s.second);
    permuted.push_back(s);
  }

  const auto a = assemble(specs, platform, q);
  const auto b = assemble(permuted, platform, q);
  ASSERT_EQ(a.Wp.rows(), b.Wp.rows());
  for (Eigen::Index r = 0; r < b.Wp.rows(); ++r) {
    const std::size_t original = perm[b.pair_origin[static_cast<std::size_t>(r)].vfi];
    Eigen::Index ra = 0;
    while (a.pair_origin[static_cast<std::size_t>(ra)].vfi != original) ++ra;
    EXPECT_LT((a.Wp.row(ra) - b.Wp.row(r)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(a.wp[ra], b.wp[r], 1e-12);
  }

  std::vector<std::optional<ControlTask>> tasks(4);
  for (std::size_t k = 0; k < 4; ++k) {
    tasks[k] = ControlTask{k, fk(platform.branches[k], platform.split(support::platform_home(platform))[k])};
  }
  const auto ua = control_step(platform, q, tasks, a).u;
  const auto ub = control_step(platform, q, tasks, b).u;
  EXPECT_LT((ua - ub).cwiseAbs().maxCoeff(), 1e-9);
}
