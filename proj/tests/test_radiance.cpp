#include <gtest/gtest.h>

#include <cmath>

#include "nerp/radiance.hpp"
#include "test_support.hpp"

namespace nerp {
namespace {

TEST(SharpSigmoid, CenterAndMonotone) {
  for (double w : {0.1, 1.0, 10.0, 1000.0}) EXPECT_DOUBLE_EQ(sharp_sigmoid(0.0, w), 0.5);
  double prev = 0.0;
  for (double x = -3.0; x <= 3.0; x += 0.05) {
    const double y = sharp_sigmoid(x, 2.0);
    EXPECT_GT(y, prev);
    prev = y;
  }
}

TEST(SdfToAlpha, Examples) {
  EXPECT_EQ(sdf_to_alpha(0.3, 0.3, 10.0), 0.0);
  EXPECT_EQ(sdf_to_alpha(-1.0, 1.0, 1.0), 0.0);
  const double phi1 = 1.0 / (1.0 + std::exp(-1.0));
  const double phim1 = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(sdf_to_alpha(1.0, -1.0, 1.0), (phi1 - phim1) / phi1, 1e-15);
  EXPECT_NEAR(sdf_to_alpha(1.0, -1.0, 1.0), 0.632121, 1e-6);
}

TEST(SdfToAlpha, InUnitIntervalEvenWhenExtreme) {
  RngState rng{21, 0};
  for (int trial = 0; trial < 5000; ++trial) {
    const double s = 20.0 * rng.next_normal();
    const double t = 20.0 * rng.next_normal();
    const double w = std::exp(8.0 * rng.next_uniform() - 2.0);
    const double a = sdf_to_alpha(s, t, w);
    ASSERT_TRUE(std::isfinite(a));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    if (t >= s) EXPECT_EQ(a, 0.0);
  }
  EXPECT_NEAR(sdf_to_alpha(1.0, -1.0, 1e4), 1.0, 1e-12);
}

TEST(SdfToAlpha, GradientMatchesFiniteDifferences) {
  RngState rng{22, 0};
  const double eps = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    double s = rng.next_normal();
    double t = s - 0.05 - rng.next_uniform();
    const double w = 0.5 + 20.0 * rng.next_uniform();
    const auto g = sdf_to_alpha_grad(s, t, w);
    const double ns = (sdf_to_alpha(s + eps, t, w) - sdf_to_alpha(s - eps, t, w)) / (2 * eps);
    const double nt = (sdf_to_alpha(s, t + eps, w) - sdf_to_alpha(s, t - eps, w)) / (2 * eps);
    const double nw = (sdf_to_alpha(s, t, w + eps) - sdf_to_alpha(s, t, w - eps)) / (2 * eps);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
    EXPECT_LT(rel(g.d_s, ns), 1e-3);
    EXPECT_LT(rel(g.d_next, nt), 1e-3);
    EXPECT_LT(rel(g.d_omega, nw), 1e-3);
  }
}

TEST(DensityAlpha, RangeAndGradient) {
  RngState rng{23, 0};
  for (int trial = 0; trial < 200; ++trial) {
    const double raw = 4.0 * rng.next_normal();
    const double delta = 0.01 + rng.next_uniform();
    const auto a = density_to_alpha(raw, delta);
    EXPECT_GE(a.alpha, 0.0);
    EXPECT_LE(a.alpha, 1.0);
    const double num = (density_to_alpha(raw + 1e-6, delta).alpha - density_to_alpha(raw - 1e-6, delta).alpha) / 2e-6;
    EXPECT_NEAR(a.d_raw, num, 1e-3 * std::max(std::abs(num), 1e-8));
  }
}

TEST(RenderRay, Examples) {
  const std::vector<Color> c1 = {Color(0.2, 0.4, 0.6)};
  const auto opaque = render_ray(std::vector<double>{3.0}, std::vector<double>{1.0}, c1);
  EXPECT_EQ(opaque.weights, std::vector<double>{1.0});
  EXPECT_EQ(opaque.color, c1[0]);
  EXPECT_EQ(opaque.depth, 3.0);

  const std::vector<Color> c3(3, Color(0.9, 0.9, 0.9));
  const auto empty = render_ray(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0}, c3);
  EXPECT_EQ(empty.color, Color::Zero());
  EXPECT_EQ(empty.depth, 0.0);
  EXPECT_EQ(empty.opacity_sum, 0.0);

  const std::vector<Color> c2 = {Color(1, 0, 0), Color(0, 1, 0)};
  const auto two = render_ray(std::vector<double>{1, 2}, std::vector<double>{0.5, 1.0}, c2);
  EXPECT_DOUBLE_EQ(two.transmittance[0], 1.0);
  EXPECT_DOUBLE_EQ(two.transmittance[1], 0.5);
  EXPECT_DOUBLE_EQ(two.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(two.weights[1], 0.5);
  EXPECT_LT((two.color - Color(0.5, 0.5, 0)).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(two.depth, 1.5);

  EXPECT_THROW(render_ray(std::vector<double>{1, 2}, std::vector<double>{0.5}, c2), std::domain_error);
}

struct RandomRay {
  std::vector<double> t;
  std::vector<double> alpha;
  std::vector<Color> color;
};

RandomRay random_ray(RngState& rng, int d) {
  RandomRay r;
  double t = 0.1;
  for (int j = 0; j < d; ++j) {
    t += 0.01 + rng.next_uniform();
    r.t.push_back(t);
    const double u = rng.next_uniform();
    r.alpha.push_back(u < 0.1 ? 0.0 : (u > 0.9 ? 1.0 : rng.next_uniform()));
    r.color.emplace_back(rng.next_uniform(), rng.next_uniform(), rng.next_uniform());
  }
  return r;
}

TEST(RenderRay, WeightsTelescopeAgainstBruteForce) {
  RngState rng{24, 0};
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_index(16));
    const RandomRay ray = random_ray(rng, d);
    const auto r = render_ray(ray.t, ray.alpha, ray.color);
    double survive = 1.0;
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      double transmit = 1.0;
      for (int k = 0; k < j; ++k) transmit *= 1.0 - ray.alpha[k];
      EXPECT_NEAR(r.weights[j], transmit * ray.alpha[j], 1e-12);
      EXPECT_GE(r.weights[j], 0.0);
      EXPECT_LE(r.weights[j], 1.0);
      if (j > 0) EXPECT_LE(r.transmittance[j], r.transmittance[j - 1]);
      sum += r.weights[j];
      survive *= 1.0 - ray.alpha[j];
    }
    EXPECT_DOUBLE_EQ(r.transmittance[0], 1.0);
    EXPECT_NEAR(sum, 1.0 - survive, 1e-9);
    EXPECT_LE(sum, 1.0 + 1e-9);
  }
}

TEST(RenderRay, RaisingEarlierOpacityNeverRaisesLaterWeight) {
  RngState rng{25, 0};
  for (int trial = 0; trial < 500; ++trial) {
    const int d = 2 + static_cast<int>(rng.next_index(15));
    RandomRay ray = random_ray(rng, d);
    const auto before = render_ray(ray.t, ray.alpha, ray.color);
    const int k = static_cast<int>(rng.next_index(d - 1));
    ray.alpha[k] += (1.0 - ray.alpha[k]) * rng.next_uniform();
    const auto after = render_ray(ray.t, ray.alpha, ray.color);
    for (int j = k + 1; j < d; ++j) EXPECT_LE(after.weights[j], before.weights[j] + 1e-15);
  }
}

TEST(RenderRay, BackwardMatchesFiniteDifferences) {
  RngState rng{26, 0};
  const double eps = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + static_cast<int>(rng.next_index(15));
    RandomRay ray = random_ray(rng, d);
    for (double& a : ray.alpha) a = 0.05 + 0.9 * a;  // keep away from the clamp ends
    const Color dc(rng.next_normal(), rng.next_normal(), rng.next_normal());
    const double dd = rng.next_normal();
    std::vector<double> extra(d);
    for (double& e : extra) e = rng.next_normal();
    auto objective = [&](const RandomRay& r) {
      const auto f = render_ray(r.t, r.alpha, r.color);
      double v = dc.dot(f.color) + dd * f.depth;
      for (int j = 0; j < d; ++j) v += extra[j] * f.weights[j];
      return v;
    };
    const auto fwd = render_ray(ray.t, ray.alpha, ray.color);
    const auto g = render_ray_backward(ray.t, ray.alpha, ray.color, fwd, dc, dd, extra);
    for (int j = 0; j < d; ++j) {
      RandomRay p = ray, m = ray;
      p.alpha[j] += eps;
      m.alpha[j] -= eps;
      EXPECT_NEAR(g.d_alpha[j], (objective(p) - objective(m)) / (2 * eps), 1e-6);
      p = ray;
      m = ray;
      p.t[j] += eps;
      m.t[j] -= eps;
      EXPECT_NEAR(g.d_t[j], (objective(p) - objective(m)) / (2 * eps), 1e-6);
      for (int c = 0; c < 3; ++c) {
        p = ray;
        m = ray;
        p.color[j][c] += eps;
        m.color[j][c] -= eps;
        EXPECT_NEAR(g.d_color[j][c], (objective(p) - objective(m)) / (2 * eps), 1e-6);
      }
    }
  }
}

class Heads : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto scene = testing::small_scene("sphere", 16);
    ModelConfig mc = testing::small_model_config(scene);
    model = build_model(mc, tape);
    RngState rng{77, 0};
    initialize_parameters(model, tape, rng);
    z.point = Vec3(0.3, -0.2, 0.5);
    z.z.resize(model.channels());
    for (int c = 0; c < model.channels(); ++c) z.z[c] = 0.1 * (c - 3);
    z.valid_views = 1;
  }
  FieldModel model;
  ParamTape tape;
  PointEmbedding z;
};

TEST_F(Heads, ZeroFinalLayers) {
  for (double& v : tape.value(model.sdf_mlp.back().weight)) v = 0.0;
  tape.value(model.sdf_mlp.back().bias)[0] = 0.7;
  for (double& v : tape.value(model.rgb_mlp.back().weight)) v = 0.0;
  for (double& v : tape.value(model.rgb_mlp.back().bias)) v = 0.0;
  RngState rng{3, 0};
  for (int i = 0; i < 20; ++i) {
    PointEmbedding other = z;
    for (double& v : other.z) v = rng.next_normal();
    other.point = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal());
    EXPECT_EQ(sdf_value(model, tape, other), 0.7);
    EXPECT_EQ(color_value(model, tape, other, Vec3::UnitX()), Color::Constant(0.5));
  }
}

TEST_F(Heads, PureAndBounded) {
  EXPECT_EQ(sdf_value(model, tape, z), sdf_value(model, tape, z));
  RngState rng{4, 0};
  for (int trial = 0; trial < 1000; ++trial) {
    for (double& v : tape.values()) v = 3.0 * rng.next_normal();
    PointEmbedding other = z;
    for (double& v : other.z) v = 3.0 * rng.next_normal();
    const Vec3 dir = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();
    const Color c = color_value(model, tape, other, dir);
    EXPECT_TRUE((c.array() >= 0.0).all() && (c.array() <= 1.0).all());
  }
  EXPECT_THROW(color_value(model, tape, z, Vec3(1, 1, 0)), std::domain_error);
}

TEST_F(Heads, GoldenValues) {
  EXPECT_NEAR(sdf_value(model, tape, z), 0.98550202172768142, 1e-12);
  const Color c = color_value(model, tape, z, Vec3(0, 0.6, 0.8));
  EXPECT_NEAR(c[0], 0.3612687670623389, 1e-12);
  EXPECT_NEAR(c[1], 0.7318662089153789, 1e-12);
  EXPECT_NEAR(c[2], 0.41388976658647986, 1e-12);
  EXPECT_NEAR(omega(model, tape), 10.0, 1e-12);
}

}  // namespace
}  // namespace nerp
