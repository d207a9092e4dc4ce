#include <doctest.h>

#include <cmath>
#include <numbers>

#include "noiseflow/baselines.hpp"
#include "noiseflow/data.hpp"

using namespace nflow;

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

TEST_CASE("gaussian fit on small inputs") {
  const std::vector<double> v{-0.005, 0.005, -0.005, 0.005};
  const auto m = gaussian_fit(v);
  CHECK(m.mean == doctest::Approx(0.0));
  CHECK(m.sigma2 == doctest::Approx(2.5e-5));
  CHECK(m.count == 4);

  const std::vector<double> one{0.001};
  CHECK_THROWS_AS(gaussian_fit(one), InputError);
  const std::vector<double> flat{0.002, 0.002, 0.002};
  CHECK_THROWS_AS(gaussian_fit(flat), InputError);
  const std::vector<double> biased{0.5, 0.7};
  CHECK_THROWS_AS(gaussian_fit(biased), InputError);
}

TEST_CASE("gaussian fit recovers the variance of unit-scale draws") {
  const auto pm = gaussian_fit(std::vector<double>{-1.0, 1.0, -1.0, 1.0});
  CHECK(pm.mean == 0.0);
  CHECK(pm.sigma2 == doctest::Approx(1.0));

  RngStream rng(4);
  std::vector<double> draws(1'000'000);
  for (double& d : draws) d = 2.0 * rng.normal();
  const auto m = gaussian_fit(draws);
  CHECK(std::abs(m.sigma2 / 4.0 - 1.0) < 0.02);
}

TEST_CASE("gaussian nll closed forms") {
  const Shape shape{2, 2, 4};
  GaussianModel unit;
  unit.sigma2 = 1.0;
  CHECK(gaussian_nll(unit, Patch(shape, 0.0)) == doctest::Approx(kHalfLog2Pi).epsilon(1e-14));
  CHECK(gaussian_nll(unit, Patch(shape, 0.0)) == doctest::Approx(0.91894).epsilon(1e-5));
  const double n0 = gaussian_nll(unit, Patch(shape, 0.0));
  const double n1 = gaussian_nll(unit, Patch(shape, 1.0));
  const double n2 = gaussian_nll(unit, Patch(shape, 2.0));
  CHECK(n0 < n1);
  CHECK(n1 < n2);
  CHECK((n2 - n0) == doctest::Approx(4.0 * (n1 - n0)));

  GaussianModel wide;
  wide.sigma2 = std::exp(2.0);
  CHECK(gaussian_nll(wide, Patch(shape, 0.0)) == doctest::Approx(kHalfLog2Pi + 1.0).epsilon(1e-14));
}

TEST_CASE("nlf nll closed forms and reduction to the gaussian") {
  const Shape shape{2, 2, 4};
  NlfModel nlf{0.01, 0.0};
  CHECK(nlf_nll(nlf, Patch(shape, 0.0), Patch(shape, 1.0)) ==
        doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi * 0.01)).epsilon(1e-14));
  CHECK(nlf_nll(nlf, Patch(shape, 0.0), Patch(shape, 1.0)) == doctest::Approx(-1.38364).epsilon(1e-5));

  RngStream rng(2);
  Patch noise = standard_normal_patch(shape, rng);
  Patch clean(shape);
  for (double& v : clean.values()) v = rng.uniform();
  GaussianModel g;
  g.sigma2 = 0.3;
  CHECK(nlf_nll(NlfModel{0.0, 0.3}, noise, clean) == doctest::Approx(gaussian_nll(g, noise)).epsilon(1e-14));

  try {
    nlf_nll(NlfModel{0.0, 0.0}, noise, clean);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("0") != std::string::npos);
  }
}

TEST_CASE("nlf nll with the true coefficients matches the generator entropy") {
  SyntheticSpec spec;
  spec.shape = Shape{4, 4, 4};
  spec.patches_per_cell = 834;  // 12 cells -> 10008 patches
  spec.seed = 5;
  const PatchDataset ds = generate_synthetic(spec);
  double nll = 0.0, entropy = 0.0;
  for (const auto& rec : ds.records) {
    const NlfModel m{rec.nlf_beta1, rec.nlf_beta2};
    const Patch clean = rec.clean.cast<double>();
    nll += nlf_nll(m, rec.noise_f64(), clean);
    double h = 0.0;
    for (double i : clean.values()) {
      h += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * (m.beta1 * i + m.beta2));
    }
    entropy += h / static_cast<double>(clean.size());
  }
  nll /= static_cast<double>(ds.size());
  entropy /= static_cast<double>(ds.size());
  CHECK(std::abs(nll - entropy) < 0.01);

  double gauss = 0.0;
  std::vector<double> all;
  for (const auto& rec : ds.records) {
    for (float v : rec.noise.values()) all.push_back(v);
  }
  const auto gm = gaussian_fit(all);
  for (const auto& rec : ds.records) gauss += gaussian_nll(gm, rec.noise_f64());
  gauss /= static_cast<double>(ds.size());
  CHECK(gauss >= nll);
}

TEST_CASE("baseline samplers") {
  const Shape shape{32, 32, 4};
  const Patch dark(shape, 0.0);
  const NlfModel nlf{0.05, 2e-3};
  RngStream rng(12);
  double sq = 0.0;
  std::size_t n = 0;
  while (n < 200'000) {
    const Patch draw = nlf_sample(nlf, dark, rng);
    for (double v : draw.values()) sq += v * v;
    n += shape.size();
  }
  CHECK(std::abs(sq / static_cast<double>(n) / nlf.beta2 - 1.0) < 0.02);

  GaussianModel g;
  g.sigma2 = 2e-3;
  double gsq = 0.0;
  n = 0;
  while (n < 200'000) {
    const Patch draw = gaussian_sample(g, shape, rng);
    for (double v : draw.values()) gsq += v * v;
    n += shape.size();
  }
  CHECK(std::abs(gsq / static_cast<double>(n) / g.sigma2 - 1.0) < 0.02);

  RngStream a(3), b(3);
  CHECK(nlf_sample(nlf, Patch(shape, 0.5), a) == nlf_sample(nlf, Patch(shape, 0.5), b));

  GaussianModel tiny;
  tiny.sigma2 = 0.0;
  const Patch quiet = gaussian_sample(tiny, Shape{2, 2, 4}, rng);
  for (double v : quiet.values()) CHECK(std::abs(v) < 1e-4);
}
