#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tomofuse/fbp.hpp"
#include "tomofuse/phantom.hpp"

using namespace tomofuse;

namespace {

double fraction(const Microstructure& m, Material c) {
  std::size_t n = 0, cyl = 0;
  for (auto v : m.labels.data()) {
    n += v == static_cast<std::uint8_t>(c);
    cyl += v != static_cast<std::uint8_t>(Material::Background);
  }
  return static_cast<double>(n) / static_cast<double>(cyl);
}

}  // namespace

TEST(Microstructure, no_inclusions_gives_pure_cement_cylinder) {
  const auto m = generate_microstructure({32, 32, 4, 1.0}, 0.0, 0.0, 7);
  for (auto v : m.labels.data()) {
    EXPECT_TRUE(v == static_cast<std::uint8_t>(Material::Background) || v == static_cast<std::uint8_t>(Material::Cement));
  }
  EXPECT_EQ(m.labels.at(16, 16, 2), static_cast<std::uint8_t>(Material::Cement));
  EXPECT_EQ(m.labels.at(0, 0, 2), static_cast<std::uint8_t>(Material::Background));
}

TEST(Microstructure, realized_fractions_within_tolerance) {
  const auto m = generate_microstructure({64, 64, 64, 1.0}, 0.3, 0.0, 11);
  const double f = fraction(m, Material::Aggregate);
  EXPECT_GE(f, 0.24);
  EXPECT_LE(f, 0.36);
  const auto both = generate_microstructure({64, 64, 32, 1.0}, 0.3, 0.05, 12);
  EXPECT_NEAR(fraction(both, Material::Aggregate), 0.3, 0.06);
  EXPECT_NEAR(fraction(both, Material::Pore), 0.05, 0.01);
}

TEST(Microstructure, deterministic_per_seed) {
  const auto a = generate_microstructure({32, 32, 8, 1.0}, 0.3, 0.05, 5);
  const auto b = generate_microstructure({32, 32, 8, 1.0}, 0.3, 0.05, 5);
  const auto c = generate_microstructure({32, 32, 8, 1.0}, 0.3, 0.05, 6);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.labels, c.labels);
}

TEST(Microstructure, rejects_bad_requests) {
  EXPECT_THROW(generate_microstructure({0, 32, 8, 1.0}, 0.1, 0.1, 1), InvalidArgument);
  EXPECT_THROW(generate_microstructure({32, 32, 8, 1.0}, 0.7, 0.3, 1), InvalidArgument);
  EXPECT_THROW(generate_microstructure({32, 32, 8, 1.0}, -0.1, 0.0, 1), InvalidArgument);
}

TEST(ForwardProject, zero_attenuation_gives_zero_sinogram) {
  const auto p = AcquisitionParams::normal(12, 2, 16);
  const Volume<float> mu(16, 16, 2, 0.0f);
  const auto s = forward_project(mu, 1.0, p);
  for (float v : s.samples()) EXPECT_EQ(v, 0.0f);
}

TEST(ForwardProject, single_center_voxel_integrates_to_value_times_pitch) {
  const auto p = AcquisitionParams::normal(20, 1, 17);
  Volume<float> mu(17, 17, 1, 0.0f);
  mu.at(8, 8, 0) = 0.5f;
  const auto s = forward_project(mu, 2.0, p, ProjectorOptions{1});
  for (int k = 0; k < p.n_proj; ++k) {
    double total = 0.0;
    for (float v : s.line(k, 0)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_NEAR(s.at(k, 0, 8), 1.0, 1e-6);
  }
}

TEST(ForwardProject, disc_center_channel_matches_chord_length) {
  const int n = 256;
  const auto p = AcquisitionParams::normal(6, 1, n);
  const auto d = matching_dims(p);
  const double radius = 100.0, a = 0.01;
  Volume<float> mu(n, n, 1, 0.0f);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (std::hypot(x - d.center_x(), y - d.center_y()) <= radius) mu.at(x, y, 0) = static_cast<float>(a);
    }
  }
  const auto s = forward_project(mu, 1.0, p);
  for (int k = 0; k < p.n_proj; ++k) {
    const double center = 0.5 * (s.at(k, 0, n / 2 - 1) + s.at(k, 0, n / 2));
    EXPECT_NEAR(center, 2.0 * radius * a, 0.02 * 2.0 * radius * a);
  }
}

TEST(ForwardProject, linear_in_the_volume) {
  const auto p = AcquisitionParams::normal(9, 2, 16);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Volume<float> x(16, 16, 2), y(16, 16, 2), z(16, 16, 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.data()[i] = u(rng);
    y.data()[i] = u(rng);
    z.data()[i] = 2.0f * x.data()[i] - 0.5f * y.data()[i];
  }
  const auto fx = forward_project(x, 1.0, p), fy = forward_project(y, 1.0, p), fz = forward_project(z, 1.0, p);
  for (std::size_t i = 0; i < fz.samples().size(); ++i) {
    EXPECT_NEAR(fz.samples()[i], 2.0f * fx.samples()[i] - 0.5f * fy.samples()[i], 1e-4);
  }
}

TEST(ForwardProject, adjoint_of_back_projection) {
  std::mt19937_64 rng(17);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (int sub : {1, 2}) {
    const auto p = AcquisitionParams::normal(11, 3, 16, 1.5);
    const auto d = matching_dims(p);
    Volume<float> x(16, 16, 3);
    for (auto& v : x.data()) v = g(rng);
    Sinogram y(p);
    for (auto& v : y.samples()) v = g(rng);
    const auto fx = forward_project(x, d.voxel_pitch, p, ProjectorOptions{sub});
    BackProjectOptions bo;
    bo.supersample = sub;
    const Volume<float> bty = back_project_volume(y, d, bo);
    // back projection carries angle_step / pitch^2 relative to the transpose
    const double lhs = oracle::dot(fx.samples(), y.samples()) * p.angle_step() / (p.pixel_pitch * d.voxel_pitch);
    const double rhs = oracle::dot(x.data(), bty.data());
    EXPECT_NEAR(lhs, rhs, 1e-4 * std::abs(rhs)) << "sub=" << sub;
  }
}

TEST(Degrade, identity_path_without_noise) {
  const auto p = AcquisitionParams::normal(8, 2, 16);
  Sinogram s(p);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 3.0f);
  for (auto& v : s.samples()) v = u(rng);
  DegradationSpec spec;
  spec.poisson = false;
  spec.poisson_flux = 1e9;
  const auto out = degrade(s, spec);
  for (std::size_t i = 0; i < s.samples().size(); ++i) EXPECT_NEAR(out.samples()[i], s.samples()[i], 1e-6);
}

TEST(Degrade, sparsity_keeps_every_kth_angle) {
  const auto p = AcquisitionParams::normal(360, 1, 8);
  Sinogram s(p);
  for (int k = 0; k < p.n_proj; ++k) {
    for (auto& v : s.line(k, 0)) v = 0.001f * static_cast<float>(k);
  }
  DegradationSpec spec;
  spec.poisson = false;
  spec.sparsity = 4;
  const auto out = degrade(s, spec);
  ASSERT_EQ(out.params().n_proj, 90);
  EXPECT_NEAR(out.params().angle_step(), 4.0 * p.angle_step(), 1e-12);
  for (int j = 0; j < 90; ++j) EXPECT_NEAR(out.at(j, 0, 3), 0.001f * static_cast<float>(4 * j), 1e-5);
}

TEST(Degrade, ring_gain_error_is_constant_across_angles) {
  const auto p = AcquisitionParams::normal(30, 1, 12);
  Sinogram s(p);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.1f, 2.0f);
  for (auto& v : s.samples()) v = u(rng);
  DegradationSpec spec;
  spec.poisson = false;
  spec.ring_gain_sigma = 0.05;
  const auto out = degrade(s, spec);
  for (int c = 0; c < p.n_chan; ++c) {
    const double first = out.at(0, 0, c) - s.at(0, 0, c);
    for (int k = 1; k < p.n_proj; ++k) EXPECT_NEAR(out.at(k, 0, c) - s.at(k, 0, c), first, 1e-5);
  }
}

TEST(Degrade, deterministic_per_seed_and_noisy) {
  const auto p = AcquisitionParams::normal(10, 2, 16);
  Sinogram s(p, 1.0f);
  DegradationSpec spec;
  spec.seed = 4;
  spec.gaussian_sigma = 2.0;
  const auto a = degrade(s, spec);
  const auto b = degrade(s, spec);
  EXPECT_EQ(a, b);
  spec.seed = 5;
  EXPECT_NE(a, degrade(s, spec));
  double mean = 0.0;
  for (float v : a.samples()) mean += v;
  mean /= static_cast<double>(a.samples().size());
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Degrade, poisson_sampler_matches_mean_and_variance) {
  std::mt19937_64 rng(2);
  for (double mean : {3.0, 25.0, 400.0}) {
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double v = static_cast<double>(sample_poisson(mean, rng));
      s += v;
      s2 += v * v;
    }
    const double m = s / n;
    const double var = s2 / n - m * m;
    EXPECT_NEAR(m, mean, 0.05 * mean + 0.1);
    EXPECT_NEAR(var, mean, 0.1 * mean + 0.2);
  }
}

TEST(Degrade, intensity_round_trip) {
  const auto p = AcquisitionParams::normal(4, 1, 8);
  Sinogram s(p, 0.7f);
  const auto back = preprocess(to_intensity(s, 1e4), 1e4);
  for (float v : back.samples()) EXPECT_NEAR(v, 0.7f, 1e-5);
}
