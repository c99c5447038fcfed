#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "skindiff/contact_synthesis.hpp"

namespace skindiff {
namespace {

using oracle::circle_sensor_separation;

const ConvexPolygon kWedge{{{-0.02, -0.015}, {0.03, -0.015}, {0.0, 0.03}}};

TEST(PoseDistance, CollinearCircles) {
  const Separation s = pose_distance(Circle{0.5}, PlanarPose{2.0, 0.0, 1, 0}, Circle{1.0});
  EXPECT_NEAR(s.value, 0.5, 1e-12);
  EXPECT_NEAR(s.gradient.x(), 1.0, 1e-12);
  EXPECT_NEAR(s.gradient.y(), 0.0, 1e-12);
}

TEST(PoseDistance, TouchingIsZero) {
  EXPECT_NEAR(pose_distance(Circle{0.5}, PlanarPose{1.5, 0.0, 1, 0}, Circle{1.0}).value, 0.0, 1e-6);
  // Box face flush against the sensor.
  EXPECT_NEAR(pose_distance(Box{0.04, 0.025}, PlanarPose{0.09, 0.0, 1, 0}, Circle{0.05}).value, 0.0, 1e-6);
}

TEST(PoseDistance, BoxMatchesDenseBoundaryOracle) {
  const Box box{0.04, 0.025};
  const auto verts = box_vertices(box);
  std::vector<Vec2> dense;
  for (std::size_t i = 0; i < 4; ++i)
    for (int k = 0; k < 25000; ++k)
      dense.push_back(verts[i] + (verts[(i + 1) % 4] - verts[i]) * (k / 25000.0));
  Rng rng = make_stream(21, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const PlanarPose pose = PlanarPose::from_angle(uniform(rng, 0.06, 0.12), uniform(rng, -0.05, 0.05),
                                                   uniform(rng, -3.0, 3.0));
    double oracle = 1e300;
    for (const auto& p : dense) oracle = std::min(oracle, transform_point(pose, p).norm() - 0.05);
    EXPECT_NEAR(pose_distance(box, pose, Circle{0.05}).value, oracle, 1e-3);
  }
}

TEST(PoseDistance, ExactForConvexObjectsAgainstCircleSensor) {
  Rng rng = make_stream(22, 0);
  for (const Shape& obj : {Shape(Box{0.04, 0.025}), Shape(kWedge)}) {
    const ContactGeometry geom(obj, Circle{0.05});
    for (int trial = 0; trial < 500; ++trial) {
      const PlanarPose pose = sample_initial_pose(SampleBounds::around_sensor(0.05), rng);
      if (posed_sdf_eval(obj, pose, Vec2::Zero()).value <= 0.0) continue;
      EXPECT_NEAR(geom.separation(pose).value, circle_sensor_separation(obj, pose, 0.05), 1e-9);
    }
  }
}

TEST(Projection, CircleCircleAnalytic) {
  const auto r = project_to_contact(Circle{0.5}, PlanarPose{2.0, 0.0, 1, 0}, Circle{1.0}, 0.0);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(std::hypot(r.pose.x, r.pose.y), 1.5, 1e-12);
  const auto p = project_to_contact(Circle{0.5}, PlanarPose{2.0, 0.0, 1, 0}, Circle{1.0}, 0.005);
  ASSERT_TRUE(p.ok());
  EXPECT_NEAR(pose_distance(Circle{0.5}, p.pose, Circle{1.0}).value, -0.005, 1e-4);
  EXPECT_NEAR(std::hypot(p.pose.x, p.pose.y), 1.495, 1e-12);
}

TEST(Projection, FixedPoint) {
  const PlanarPose init{1.495, 0.0, 1, 0};
  const auto r = project_to_contact(Circle{0.5}, init, Circle{1.0}, 0.005);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(std::hypot(r.pose.x - init.x, r.pose.y - init.y), 0.0, 1e-9);
}

TEST(Projection, ExactnessOnThousandDraws) {
  Rng rng = make_stream(23, 0);
  const std::vector<Shape> objects = {Circle{0.03}, Box{0.04, 0.025}, kWedge};
  for (const auto& obj : objects) {
    const ContactGeometry geom(obj, Circle{0.05});
    int done = 0;
    while (done < 1000) {
      const PlanarPose init = sample_initial_pose(SampleBounds::around_sensor(0.05), rng);
      const double delta = uniform(rng, 0.0, 0.005);
      if (geom.separation(init).value <= 0.0) continue;
      const auto r = project_to_contact(geom, init, delta);
      if (!r.ok()) continue;
      ++done;
      // Independent closed form, then the sampled separation itself.
      EXPECT_LE(std::abs(circle_sensor_separation(obj, r.pose, 0.05) + delta), 1e-4);
      EXPECT_LE(std::abs(pose_distance(obj, r.pose, Circle{0.05}).value + delta), 1e-4);
      // Translation only: the heading is untouched.
      EXPECT_EQ(r.pose.c, init.c);
      EXPECT_EQ(r.pose.s, init.s);
    }
  }
}

TEST(Projection, DegenerateGradientSignalled) {
  // A box sensor's centre is on its medial axis; a circular object centred there has no
  // well-defined escape direction.
  const auto r = project_to_contact(Circle{0.01}, PlanarPose{0.0, 0.0, 1, 0}, Box{0.05, 0.05}, 0.0);
  EXPECT_EQ(r.status, ProjectionStatus::degenerate_gradient);
}

TEST(InitialPose, HeadingUniformChiSquared) {
  Rng rng = make_stream(24, 0);
  constexpr int kBins = 36;
  constexpr int kDraws = 10000;
  std::vector<int> counts(kBins, 0);
  for (int i = 0; i < kDraws; ++i) {
    const double th = sample_initial_pose(SampleBounds{}, rng).angle();
    int b = static_cast<int>((th + std::numbers::pi) / (2 * std::numbers::pi) * kBins);
    counts[static_cast<std::size_t>(std::clamp(b, 0, kBins - 1))]++;
  }
  const double expected = static_cast<double>(kDraws) / kBins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-squared with 35 degrees of freedom.
  EXPECT_LT(chi2, 57.3420734338592);
}

TEST(Synthesis, RecordsAreInContactAndDeterministic) {
  const TaxelArray array = build_array(0.05, 16, 0.005, 0.02);
  SynthesisConfig cfg;
  cfg.n_samples = 300;
  cfg.seed = 5;
  const Shape obj = Box{0.04, 0.025};
  const Dataset a = synthesize_dataset(obj, array, cfg);
  const Dataset b = synthesize_dataset(obj, array, cfg);
  ASSERT_EQ(a.records.size(), 300u);
  EXPECT_EQ(a.records, b.records);
  for (const auto& r : a.records) {
    EXPECT_LE(std::abs(pose_distance(obj, r.pose, array.sensor_shape()).value + r.delta), 1e-4);
    EXPECT_GE(r.delta, 0.0);
    EXPECT_LE(r.delta, cfg.delta_max);
    EXPECT_EQ(r.observation, observe(obj, r.pose, array));
  }
}

TEST(Synthesis, SingleRecordByteIdentical) {
  const TaxelArray array = build_array(0.05, 16, 0.005, 0.02);
  SynthesisConfig cfg;
  cfg.n_samples = 1;
  cfg.seed = 77;
  auto bytes = [&] {
    std::ostringstream out;
    write_dataset(out, {"can", array.config_json(), array.config_hash(), cfg.seed, cfg.delta_max, 1},
                  synthesize_dataset(Circle{0.03}, array, cfg).records);
    return out.str();
  };
  EXPECT_EQ(bytes(), bytes());
}

TEST(Synthesis, FullScaleCount) {
  const TaxelArray array = build_array(0.05, 64, 0.005, 0.02);
  SynthesisConfig cfg;
  cfg.seed = 1;
  EXPECT_EQ(synthesize_dataset(Circle{0.03}, array, cfg).records.size(), 10000u);
}

TEST(Synthesis, RejectsBoundsInsideSensor) {
  const TaxelArray array = build_array(0.05, 16, 0.005, 0.02);
  SynthesisConfig cfg;
  cfg.n_samples = 10;
  cfg.bounds = {-0.04, 0.04, -0.04, 0.04};
  EXPECT_THROW(synthesize_dataset(Circle{0.01}, array, cfg), ConfigError);
}

TEST(Synthesis, InvalidConfig) {
  SynthesisConfig cfg;
  cfg.n_samples = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.delta_max = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(DatasetFile, RoundTrip) {
  const TaxelArray array = build_array(0.05, 16, 0.005, 0.02);
  SynthesisConfig cfg;
  cfg.n_samples = 50;
  const auto ds = synthesize_dataset(kWedge, array, cfg);
  std::stringstream io;
  write_dataset(io, {"wedge", array.config_json(), array.config_hash(), 0, cfg.delta_max, 50}, ds.records);
  const auto [header, records] = read_dataset(io);
  EXPECT_EQ(header.object_name, "wedge");
  EXPECT_EQ(header.sensor_hash, array.config_hash());
  EXPECT_EQ(records, ds.records);
}

TEST(DatasetFile, RejectsWrongSchemaOrCount) {
  std::istringstream bad_version(
      R"({"schema":"skindiff.dataset","version":99,"object":"a","sensor":{},"sensor_hash":"","seed":0,"delta_max":0,"n_samples":0})");
  EXPECT_THROW(read_dataset(bad_version), ConfigError);
  std::istringstream short_file(
      R"({"schema":"skindiff.dataset","version":1,"object":"a","sensor":{},"sensor_hash":"","seed":0,"delta_max":0,"n_samples":2})"
      "\n"
      R"({"pose":[0,0,1,0],"obs":[0],"delta":0})");
  EXPECT_THROW(read_dataset(short_file), ConfigError);
}

}  // namespace
}  // namespace skindiff
