#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "noiseflow/layers.hpp"

using namespace nflow;

namespace {

ConditioningContext make_ctx(const Shape& shape, double clean_value, int iso = 200, int camera = 0) {
  ConditioningContext ctx;
  ctx.clean = Patch(shape, clean_value);
  ctx.iso = iso;
  ctx.camera_id = camera;
  return ctx;
}

ConditioningContext random_ctx(const Shape& shape, RngStream& rng, int iso, int camera) {
  ConditioningContext ctx;
  ctx.clean = Patch(shape);
  for (double& v : ctx.clean.values()) v = rng.uniform();
  ctx.iso = iso;
  ctx.camera_id = camera;
  return ctx;
}

Patch random_patch(const Shape& shape, RngStream& rng, double scale = 1.0) {
  Patch p = standard_normal_patch(shape, rng);
  for (double& v : p.values()) v *= scale;
  return p;
}

void perturb(ParamStore& params, RngStream& rng, double scale) {
  for (std::size_t e = 0; e < params.entry_count(); ++e) {
    for (double& v : params[e].value) v += scale * rng.normal();
  }
}

double max_abs_diff(const Patch& a, const Patch& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct LayerFixture {
  ParamStore params;
  std::unique_ptr<Bijection> layer;
};

LayerFixture make_layer(LayerKind kind, RngStream& rng) {
  LayerFixture f;
  switch (kind) {
    case LayerKind::SignalDependent:
      f.layer = std::make_unique<SignalDependentLayer>(f.params);
      break;
    case LayerKind::Gain:
      f.layer = std::make_unique<GainLayer>(f.params, std::vector<int>{100, 400, 800, 1600}, 3, true);
      break;
    case LayerKind::AffineCoupling:
      f.layer = std::make_unique<AffineCouplingLayer>(f.params, 4, 32, true, rng, "c");
      break;
    case LayerKind::ChannelMix:
      f.layer = std::make_unique<ChannelMixLayer>(f.params, 4, rng, "m");
      break;
  }
  return f;
}

constexpr LayerKind kAllKinds[] = {LayerKind::SignalDependent, LayerKind::Gain,
                                   LayerKind::AffineCoupling, LayerKind::ChannelMix};
constexpr int kIsos[] = {100, 400, 800, 1600};

}  // namespace

TEST_CASE("signal layer examples") {
  ParamStore params;
  SignalDependentLayer layer(params);
  const Shape shape{1, 1, 4};

  auto [y0, ld0] = layer.forward(Patch(shape, 0.5), make_ctx(shape, 0.0), params);
  CHECK(y0 == Patch(shape, 0.5));
  CHECK(ld0 == 0.0);

  params.at("signal.b1").value[0] = 0.0;
  params.at("signal.b2").value[0] = 0.0;
  auto [y, ld] = layer.forward(Patch(shape, 0.5), make_ctx(shape, 3.0), params);
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ld == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("signal layer scale is strictly increasing in the clean signal") {
  ParamStore params;
  SignalDependentLayer layer(params);
  params.at("signal.b1").value[0] = std::log(0.3);
  const Shape shape{4, 4, 4};
  RngStream rng(3);
  Patch clean(shape);
  for (double& v : clean.values()) v = rng.uniform();
  auto s = layer.scale(clean, params);
  std::vector<std::size_t> order(clean.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return clean[a] < clean[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (clean[order[i]] > clean[order[i - 1]]) CHECK(s[order[i]] > s[order[i - 1]]);
  }
}

TEST_CASE("signal layer rejects negative clean values and shape mismatches") {
  ParamStore params;
  SignalDependentLayer layer(params);
  const Shape shape{2, 2, 4};
  CHECK_THROWS_AS(layer.forward(Patch(shape, 0.1), make_ctx(shape, -0.5), params), InputError);
  CHECK_NOTHROW(layer.forward(Patch(shape, 0.1), make_ctx(shape, -1e-12), params));
  CHECK_THROWS_AS(layer.forward(Patch(shape, 0.1), make_ctx(Shape{1, 2, 4}, 0.2), params), InputError);
}

TEST_CASE("gain layer examples") {
  ParamStore params;
  GainLayer layer(params, {100, 200, 400, 800, 1600}, 3, true);
  const Shape shape{2, 2, 4};

  auto [y, ld] = layer.forward(Patch(shape, 0.1), make_ctx(shape, 0.0, 400), params);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(ld == doctest::Approx(16.0 * std::log(2.0)).epsilon(1e-14));

  auto [x, ld_inv] = layer.inverse(Patch(shape, 0.2), make_ctx(shape, 0.0, 400), params);
  for (double v : x.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(ld_inv == doctest::Approx(-16.0 * std::log(2.0)).epsilon(1e-14));

  auto [same, ld200] = layer.forward(Patch(shape, 0.3), make_ctx(shape, 0.0, 200), params);
  CHECK(max_abs_diff(same, Patch(shape, 0.3)) < 1e-15);
  CHECK(std::abs(ld200) < 1e-12);

  params.at("gain.w").value[1] = 1.0;
  CHECK(layer.gamma(100, 1, params) == doctest::Approx(std::exp(1.0) / 2.0).epsilon(1e-14));

  CHECK_THROWS_AS(layer.gamma(300, 0, params), InputError);
  CHECK_THROWS_AS(layer.gamma(100, 3, params), InputError);
}

TEST_CASE("gain ordering at default init follows ISO") {
  ParamStore params;
  GainLayer layer(params, {100, 400, 800, 1600}, 5, true);
  for (int m = 0; m < 5; ++m) {
    CHECK(layer.gamma(100, m, params) < layer.gamma(400, m, params));
    CHECK(layer.gamma(400, m, params) < layer.gamma(800, m, params));
    CHECK(layer.gamma(800, m, params) < layer.gamma(1600, m, params));
  }
}

TEST_CASE("coupling layer examples") {
  ParamStore params;
  RngStream rng(11);
  AffineCouplingLayer layer(params, 4, 32, true, rng, "c");
  const Shape shape{1, 1, 4};
  const Patch x(shape, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  const ConditioningContext ctx = make_ctx(shape, 0.0);

  auto [ident, ld0] = layer.forward(x, ctx, params);
  CHECK(ident == x);
  CHECK(ld0 == 0.0);

  std::fill(params.at("c.w1").value.begin(), params.at("c.w1").value.end(), 0.0);
  params.at("c.b2").value = {std::log(3.0), std::log(3.0), 1.0, 1.0};
  auto [y, ld] = layer.forward(x, ctx, params);
  CHECK(y[0] == doctest::Approx(1.3).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(1.6).epsilon(1e-14));
  CHECK(y[2] == 0.3);
  CHECK(y[3] == 0.4);
  CHECK(ld == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-14));

  auto [back, ld_inv] = layer.inverse(y, ctx, params);
  CHECK(max_abs_diff(back, x) < 1e-12);
  CHECK(ld_inv == doctest::Approx(-ld));
}

TEST_CASE("coupling layer with the second half transformed") {
  ParamStore params;
  RngStream rng(12);
  AffineCouplingLayer layer(params, 4, 8, false, rng, "c");
  std::fill(params.at("c.w1").value.begin(), params.at("c.w1").value.end(), 0.0);
  params.at("c.b2").value = {std::log(2.0), 0.0, 0.5, 0.0};
  const Shape shape{1, 1, 4};
  auto [y, ld] = layer.forward(Patch(shape, std::vector<double>{1, 2, 3, 4}), make_ctx(shape, 0.0),
                               params);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == doctest::Approx(6.5));
  CHECK(y[3] == doctest::Approx(4.0));
  CHECK(ld == doctest::Approx(std::log(2.0)));
}

TEST_CASE("coupling layer rejects odd channel counts") {
  ParamStore params;
  RngStream rng(1);
  CHECK_THROWS_AS(AffineCouplingLayer(params, 3, 8, true, rng, "c"), InputError);
}

TEST_CASE("channel mix examples") {
  ParamStore params;
  RngStream rng(5);
  ChannelMixLayer layer(params, 4, rng, "m");
  const Shape shape{8, 8, 4};
  const ConditioningContext ctx = make_ctx(shape, 0.0);
  const Patch x = random_patch(shape, rng);

  auto [y_rot, ld_rot] = layer.forward(x, ctx, params);
  CHECK(std::abs(ld_rot) < 1e-9);

  params.at("m.A").value = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  auto [y_id, ld_id] = layer.forward(x, ctx, params);
  CHECK(y_id == x);
  CHECK(ld_id == 0.0);

  params.at("m.A").value[0] = 2.0;
  auto [y2, ld2] = layer.forward(x, ctx, params);
  CHECK(ld2 == doctest::Approx(64.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(ld2 == doctest::Approx(44.3614).epsilon(1e-5));

  params.at("m.A").value = {1, 2, 0, 0, 2, 4, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  CHECK_THROWS_AS(layer.forward(x, ctx, params), NumericError);
  CHECK_THROWS_AS(layer.inverse(x, ctx, params), NumericError);
}

TEST_CASE("every layer round-trips and has antisymmetric log-dets") {
  RngStream rng(2024);
  const Shape shape{4, 4, 4};
  for (LayerKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    LayerFixture f = make_layer(kind, rng);
    double worst = 0.0, worst_ld = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      ParamStore params = f.params;
      perturb(params, rng, 0.1);
      const auto ctx = random_ctx(shape, rng, kIsos[trial % 4], trial % 3);
      const Patch x = random_patch(shape, rng, 0.1);
      auto [y, ld_f] = f.layer->forward(x, ctx, params);
      auto [back, ld_i] = f.layer->inverse(y, ctx, params);
      worst = std::max(worst, max_abs_diff(back, x));
      worst_ld = std::max(worst_ld, std::abs(ld_f + ld_i));
    }
    CHECK(worst < 1e-9);
    CHECK(worst_ld < 1e-9);
  }
}

TEST_CASE("analytic log-dets agree with the numeric Jacobian") {
  RngStream rng(77);
  const Shape shape{4, 4, 4};
  for (LayerKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    LayerFixture f = make_layer(kind, rng);
    perturb(f.params, rng, 0.3);
    const auto ctx = random_ctx(shape, rng, 800, 1);
    const Patch x = random_patch(shape, rng, 0.2);
    auto [y, analytic] = f.layer->forward(x, ctx, f.params);
    const double numeric = numeric_jacobian_logdet(
        [&](std::span<const double> v) {
          Patch p(shape, std::vector<double>(v.begin(), v.end()));
          return f.layer->forward(p, ctx, f.params).first.data();
        },
        x.values(), 1e-5);
    CHECK(std::abs(analytic - numeric) < 1e-3);
  }
}

TEST_CASE("backward_inverse matches finite differences for every layer") {
  RngStream rng(99);
  const Shape shape{2, 2, 4};
  for (LayerKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    LayerFixture f = make_layer(kind, rng);
    perturb(f.params, rng, 0.2);
    ConditioningContext ctx = random_ctx(shape, rng, 400, 2);
    const Patch y = random_patch(shape, rng, 0.3);
    const Patch upstream = random_patch(shape, rng);

    // L = <upstream, g(y)> - logdet_inverse(y)
    auto loss_at = [&](const ParamStore& p, const Patch& input, const ConditioningContext& c) {
      auto [x, ld] = f.layer->inverse(input, c, p);
      double acc = -ld;
      for (std::size_t i = 0; i < x.size(); ++i) acc += upstream[i] * x[i];
      return acc;
    };

    std::vector<double> param_grad(f.params.total_count(), 0.0);
    std::vector<double> grad(upstream.data());
    std::vector<double> clean_grad(ctx.clean.size(), 0.0);
    f.layer->backward_inverse(y.values(), grad, shape, ctx, f.params, param_grad, clean_grad);

    const auto fd_params = finite_diff_gradient(
        [&](const ParamStore& p) { return loss_at(p, y, ctx); }, f.params, 1e-6);
    for (std::size_t i = 0; i < fd_params.size(); ++i) {
      CHECK(std::abs(param_grad[i] - fd_params[i]) <= 1e-5 * std::max(1.0, std::abs(fd_params[i])));
    }

    for (std::size_t i = 0; i < y.size(); ++i) {
      Patch hi = y, lo = y;
      hi[i] += 1e-6;
      lo[i] -= 1e-6;
      const double fd = (loss_at(f.params, hi, ctx) - loss_at(f.params, lo, ctx)) / 2e-6;
      CHECK(std::abs(grad[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }

    for (std::size_t i = 0; i < ctx.clean.size(); ++i) {
      ConditioningContext hi = ctx, lo = ctx;
      hi.clean[i] += 1e-6;
      lo.clean[i] -= 1e-6;
      const double fd = (loss_at(f.params, y, hi) - loss_at(f.params, y, lo)) / 2e-6;
      CHECK(std::abs(clean_grad[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("gain gradient touches only the active ISO entry") {
  ParamStore params;
  GainLayer layer(params, {100, 400, 800, 1600}, 5, false);
  const Shape shape{2, 2, 4};
  RngStream rng(4);
  const auto ctx = make_ctx(shape, 0.0, 800);
  const Patch y = random_patch(shape, rng);
  std::vector<double> param_grad(params.total_count(), 0.0);
  std::vector<double> grad(y.size(), 0.0);
  layer.backward_inverse(y.values(), grad, shape, ctx, params, param_grad, {});
  for (std::size_t i = 0; i < 4; ++i) {
    if (i == 2) {
      CHECK(param_grad[i] != 0.0);
    } else {
      CHECK(param_grad[i] == 0.0);
    }
  }
}

TEST_CASE("zero-initialized coupling output stage still receives gradient") {
  ParamStore params;
  RngStream rng(8);
  AffineCouplingLayer layer(params, 4, 32, true, rng, "c");
  const Shape shape{2, 2, 4};
  const auto ctx = make_ctx(shape, 0.0);
  const Patch y = random_patch(shape, rng);
  const Patch upstream = y;  // gradient of 0.5 |x|^2 at identity
  std::vector<double> param_grad(params.total_count(), 0.0);
  std::vector<double> grad(upstream.data());
  layer.backward_inverse(y.values(), grad, shape, ctx, params, param_grad, {});
  const auto& w2 = params.at("c.w2");
  double norm = 0.0;
  for (std::size_t i = 0; i < w2.size(); ++i) norm += std::abs(param_grad[w2.offset + i]);
  CHECK(norm > 0.0);

  const auto fd = finite_diff_gradient(
      [&](const ParamStore& p) {
        auto [x, ld] = layer.inverse(y, ctx, p);
        double acc = -ld;
        for (double v : x.values()) acc += 0.5 * v * v;
        return acc;
      },
      params, 1e-6);
  for (std::size_t i = 0; i < w2.size(); ++i) {
    CHECK(std::abs(param_grad[w2.offset + i] - fd[w2.offset + i]) < 1e-6);
  }
}
