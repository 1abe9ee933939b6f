#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "railkit/teleop.hpp"
#include "railkit/udp.hpp"
#include "support.hpp"

using namespace railkit;

namespace {

OperatorPacket random_packet(std::mt19937_64& rng) {
  OperatorPacket p;
  p.flags = static_cast<std::uint8_t>(rng());
  p.seq = static_cast<std::uint32_t>(rng());
  p.timestamp_us = rng();
  p.pose = support::random_pose(rng, 2.0);
  p.gripper_aperture = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return p;
}

ErrorCode decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::Io;
}

Pose at(const Vec3& t) { return from_translation(t); }

}  // namespace

TEST(Codec, IdentityPacketBytes) {
  const PacketBytes b = encode(OperatorPacket{});
  std::vector<std::uint8_t> expected{0x41, 0x49, 0x53, 0x50, 0x01, 0x00, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  // f64(1.0) little-endian
  for (std::uint8_t x : {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F}) expected.push_back(x);
  expected.resize(90, 0x00);
  EXPECT_EQ(std::vector<std::uint8_t>(b.begin(), b.end()), expected);
  EXPECT_EQ(b.size(), 90u);
}

TEST(Codec, FieldOffsets) {
  OperatorPacket p;
  p.flags = kFlagClutch | kFlagGripperClosed;
  p.seq = 0x04030201;
  p.timestamp_us = 0x0807060504030201ull;
  p.gripper_aperture = 0.5;
  const PacketBytes b = encode(p);
  EXPECT_EQ(b[5], 0x03);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(b[6 + i], i + 1);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(b[10 + i], i + 1);
  EXPECT_EQ(b[88], 0xE0);  // 0.5 = 0x3FE0000000000000
  EXPECT_EQ(b[89], 0x3F);
}

TEST(Codec, RoundTripIsBitwise) {
  std::mt19937_64 rng(197);
  for (int i = 0; i < 10000; ++i) {
    const OperatorPacket p = random_packet(rng);
    const PacketBytes b = encode(p);
    const OperatorPacket back = decode(b);
    ASSERT_EQ(back, p);
    ASSERT_EQ(encode(back), b);
  }
}

TEST(Codec, EncodeRejectsInvalid) {
  OperatorPacket p;
  p.pose.primary.w = 1.01;
  EXPECT_THROW(encode(p), Error);
  p = OperatorPacket{};
  p.gripper_aperture = 1.5;
  try {
    encode(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ApertureOutOfRange);
  }
  p.gripper_aperture = std::nan("");
  EXPECT_THROW(encode(p), Error);
}

TEST(Codec, DecodeErrorsAreDistinct) {
  const PacketBytes good = encode(OperatorPacket{});
  EXPECT_EQ(decode_error(std::span(good.data(), 89)), ErrorCode::BadLength);
  std::vector<std::uint8_t> longer(good.begin(), good.end());
  longer.push_back(0);
  EXPECT_EQ(decode_error(longer), ErrorCode::BadLength);
  EXPECT_EQ(decode_error({}), ErrorCode::BadLength);

  PacketBytes b = good;
  b[0] = 'X';
  EXPECT_EQ(decode_error(b), ErrorCode::BadMagic);
  b = good;
  b[4] = 2;
  EXPECT_EQ(decode_error(b), ErrorCode::BadVersion);
  b = good;
  b[25] = 0x40;  // primary.w = 2.0
  EXPECT_EQ(decode_error(b), ErrorCode::NonUnitPose);
  b = good;
  b[89] = 0x40;  // aperture = 2.0
  EXPECT_EQ(decode_error(b), ErrorCode::ApertureOutOfRange);
}

TEST(Codec, UnitToleranceIsOneMicro) {
  Pose p = Pose::identity();
  p.primary.w = 1.0 + 5e-7;
  OperatorPacket ok;
  ok.pose = p;
  EXPECT_NO_THROW(decode(encode(ok)));
  p.primary.w = 1.0 + 5e-6;
  ok.pose = p;
  EXPECT_THROW(encode(ok), Error);
}

TEST(Codec, FuzzNeverCrashes) {
  std::mt19937_64 rng(199);
  std::uniform_int_distribution<int> byte(0, 255);
  int typed = 0;
  for (int i = 0; i < 20000; ++i) {
    PacketBytes b;
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    // Half the buffers carry a valid header so the body checks get exercised.
    if (i % 2) {
      std::copy(kPacketMagic.begin(), kPacketMagic.end(), b.begin());
      b[4] = kPacketVersion;
    }
    try {
      decode(b);
    } catch (const Error&) {
      ++typed;
    }
  }
  EXPECT_GT(typed, 0);
}

TEST(Session, ThreeToOneScaling) {
  std::mt19937_64 rng(211);
  TeleopSession s(3.0);
  const Pose follower = support::random_pose(rng);
  s.reset(follower);
  s.map(at({0.1, 0.2, 0.3}), false);
  const Pose moved = s.map(at({0.103, 0.2, 0.3}), false);
  const Vec3 delta = translation_of(moved) - translation_of(follower);
  EXPECT_NEAR(delta.x(), 0.001, 1e-9);
  EXPECT_NEAR(delta.y(), 0.0, 1e-12);
  EXPECT_NEAR(delta.z(), 0.0, 1e-12);
  EXPECT_LT((to_vec8(moved).head<4>() - to_vec8(follower).head<4>()).norm(), 1e-15);
}

TEST(Session, IdentityMappingAtUnitScale) {
  std::mt19937_64 rng(223);
  TeleopSession s(1.0);
  s.reset(Pose::identity());
  s.map(Pose::identity(), false);
  for (int i = 0; i < 50; ++i) {
    const Pose m = support::random_pose(rng);
    const Pose t = s.map(m, false);
    EXPECT_LT((to_vec8(t) - to_vec8(m)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Session, RotationIsNotScaled) {
  TeleopSession s(3.0);
  s.reset(Pose::identity());
  s.map(Pose::identity(), false);
  const Quaternion r = axis_angle(Vec3::UnitZ(), 0.3);
  const Pose t = s.map(from_rotation(r), false);
  EXPECT_LT((to_vec8(t) - to_vec8(from_rotation(r))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Session, ClutchHoldsAndReleaseIsContinuous) {
  std::mt19937_64 rng(227);
  TeleopSession s(3.0);
  s.reset(support::random_pose(rng));
  s.map(support::random_pose(rng), false);
  const Pose held = s.map(support::random_pose(rng), false);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(s.map(support::random_pose(rng), true), held);
    EXPECT_TRUE(s.clutched());
  }
  const Pose after = s.map(support::random_pose(rng), false);
  EXPECT_LT((to_vec8(after) - to_vec8(held)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(s.clutched());
}

TEST(Session, NoAnchorBeforeReset) {
  TeleopSession s;
  try {
    s.map(Pose::identity(), false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoAnchor);
  }
  EXPECT_THROW(s.target(), Error);
  EXPECT_THROW(TeleopSession(0.0), Error);
}

TEST(Session, StalePacketsAreDropped) {
  std::mt19937_64 rng(229);
  std::vector<OperatorPacket> packets;
  for (std::uint32_t k = 1; k <= 30; ++k) {
    OperatorPacket p;
    p.seq = k;
    p.pose = support::random_pose(rng, 0.05);
    packets.push_back(p);
  }
  TeleopSession in_order(3.0);
  in_order.reset(Pose::identity());
  in_order.accept(packets[0]);
  in_order.accept(packets.back());

  std::vector<OperatorPacket> shuffled(packets.begin() + 1, packets.end());
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  TeleopSession s(3.0);
  s.reset(Pose::identity());
  s.accept(packets[0]);
  int taken = 0;
  for (const auto& p : shuffled) {
    if (s.accept(p)) ++taken;
  }
  EXPECT_LT(taken, 29);
  EXPECT_EQ(*s.last_seq(), 30u);
  // The target depends on the highest-seq packet (and the anchor) only.
  EXPECT_LT((to_vec8(s.target()) - to_vec8(in_order.target())).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_FALSE(s.accept(packets[29]));
}

TEST(Session, ScaleChangeDoesNotJump) {
  TeleopSession s(3.0);
  s.reset(Pose::identity());
  s.map(at({0, 0, 0}), false);
  const Pose before = s.map(at({0.03, 0, 0}), false);
  s.set_scale(1.0);
  EXPECT_EQ(s.target(), before);
  const Pose after = s.map(at({0.04, 0, 0}), false);
  EXPECT_NEAR(translation_of(after).x(), 0.02, 1e-12);
}

TEST(Script, PacketsFollowWaypoints) {
  const auto script = parse_operator_script(R"(
rate_hz: 10
waypoints:
  - { t: 0.0, translation: [0, 0, 0] }
  - { t: 0.5, translation: [0.003, 0, 0] }
  - { t: 1.0, clutch: true, gripper: closed, aperture: 0.2 }
)");
  const auto packets = script_packets(script);
  ASSERT_EQ(packets.size(), 11u);
  EXPECT_EQ(packets[0].packet.seq, 1u);
  EXPECT_EQ(translation_of(packets[4].packet.pose).x(), 0.0);
  EXPECT_EQ(translation_of(packets[5].packet.pose).x(), 0.003);
  EXPECT_TRUE(packets[10].packet.clutch());
  EXPECT_TRUE(packets[10].packet.gripper_closed());
  EXPECT_EQ(translation_of(packets[10].packet.pose).x(), 0.003);
  EXPECT_EQ(packets[10].packet.timestamp_us, 1000000u);

  EXPECT_THROW(parse_operator_script("waypoints: [ { t: 1 }, { t: 0.5 } ]"), Error);
  EXPECT_THROW(parse_operator_script("waypoints: [ { t: 0, speed: 2 } ]"), Error);
  EXPECT_THROW(parse_operator_script("waypoints: []"), Error);
}

TEST(Mailbox, LatestValueWins) {
  LatestValue<int> box;
  EXPECT_FALSE(box.get());
  std::jthread writer([&] {
    for (int i = 1; i <= 10000; ++i) box.put(i);
  });
  writer.join();
  EXPECT_EQ(*box.get(), 10000);
  EXPECT_EQ(box.version(), 10000u);
}

TEST(Udp, LoopbackDelivery) {
  LatestValue<OperatorPacket> box;
  std::atomic<int> errors = 0;
  UdpReceiver rx(0, [&](const OperatorPacket& p) { box.put(p); }, [&](const Error&) { ++errors; });
  UdpSender tx("127.0.0.1", rx.port());
  OperatorPacket p;
  p.seq = 7;
  p.pose = at({0.001, 0.002, 0.003});
  tx.send(p);
  const std::uint8_t junk[5] = {1, 2, 3, 4, 5};
  tx.send_raw(junk);
  for (int i = 0; i < 200 && (rx.received() < 1 || rx.rejected() < 1); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ASSERT_TRUE(box.get());
  EXPECT_EQ(*box.get(), p);
  EXPECT_EQ(errors.load(), 1);
}
