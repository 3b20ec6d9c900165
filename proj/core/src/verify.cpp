#include "stpd/verify.hpp"

#include "stpd/simulate.hpp"
#include "stpd/stpdnet.hpp"

#include <cmath>

namespace stpd {

using ad::Graph;
using ad::Parameter;
using ad::Var;

namespace {

struct Dims
{
  std::size_t image, views, bins, frames, hidden;
};

Dims dims_for(GradCheckScale s)
{
  return s == GradCheckScale::Tiny ? Dims{8, 4, 8, 3, 4} : Dims{16, 8, 16, 4, 6};
}

TensorD random_tensor(Shape shape, CounterRng &rng, double scale = 1.0, double min_abs = 0.0)
{
  TensorD t(std::move(shape));
  for (auto &v : t.data()) {
    double x = rng.normal() * scale;
    // keep samples off the ReLU kink so central differences stay one-sided-free
    if (std::abs(x) < min_abs) { x = x < 0 ? x - min_abs : x + min_abs; }
    v = x;
  }
  return t;
}

Parameter<double> random_param(std::string name, Shape shape, CounterRng &rng, double scale = 1.0,
                               double min_abs = 0.0)
{
  return {std::move(name), random_tensor(std::move(shape), rng, scale, min_abs)};
}

} // namespace

std::vector<GradCheckCase> gradcheck_suite(GradCheckScale scale, std::uint64_t seed)
{
  auto const d = dims_for(scale);
  std::vector<GradCheckCase> out;
  ad::GradCheckOptions opts;
  opts.seed = seed;
  auto run = [&](std::string name, auto const &build, std::vector<Parameter<double> *> params) {
    out.push_back({std::move(name), ad::grad_check(build, params, opts)});
  };
  std::uint64_t stream = 0;
  auto rng_for = [&] { return CounterRng(seed, 0x6763, stream++); };

  std::size_t const N = 2, C = 2, T = d.frames, S = std::max<std::size_t>(5, d.image / 2);

  for (std::size_t kt : {3, 1}) {
    auto rng = rng_for();
    auto x = random_param("input", {N, C, T, S, S}, rng);
    auto w = random_param("weight", {3, C, kt, 3, 3}, rng, 0.3);
    auto b = random_param("bias", {3}, rng);
    auto const u = random_tensor({N, 3, T, S, S}, rng);
    run(kt == 3 ? "conv3d" : "conv3d_1x3x3",
        [&](Graph<double> &g) {
          return ad::inner(g, ad::conv3d(g, g.parameter(x), g.parameter(w), g.parameter(b)), u);
        },
        {&x, &w, &b});
  }

  for (auto mode : {ad::BnMode::Train, ad::BnMode::Eval}) {
    auto rng = rng_for();
    auto x = random_param("input", {N, 3, T, 4, 4}, rng, 2.0);
    ad::BatchNormState<double> bn("bn", 3);
    bn.gamma.value = random_tensor({3}, rng);
    bn.beta.value = random_tensor({3}, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      bn.running_mean[c] = rng.normal();
      bn.running_var[c] = 0.5 + rng.uniform();
    }
    bn.batches_tracked = 1;
    bn.mode = mode;
    auto const u = random_tensor({N, 3, T, 4, 4}, rng);
    run(mode == ad::BnMode::Train ? "batch_norm_train" : "batch_norm_eval",
        [&](Graph<double> &g) { return ad::inner(g, ad::batch_norm(g, g.parameter(x), bn), u); },
        {&x, &bn.gamma, &bn.beta});
  }

  {
    auto rng = rng_for();
    auto x = random_param("input", {N, C, T, 4, 4}, rng, 1.0, 0.05);
    auto const u = random_tensor({N, C, T, 4, 4}, rng);
    run("relu", [&](Graph<double> &g) { return ad::inner(g, ad::relu(g, g.parameter(x)), u); }, {&x});
  }
  {
    auto rng = rng_for();
    auto a = random_param("a", {N, C, T, 4, 4}, rng);
    auto b = random_param("b", {N, C, T, 4, 4}, rng);
    auto const u = random_tensor({N, C, T, 4, 4}, rng);
    run("add", [&](Graph<double> &g) { return ad::inner(g, ad::add(g, g.parameter(a), g.parameter(b)), u); },
        {&a, &b});
  }
  {
    auto rng = rng_for();
    auto a = random_param("a", {N, 1, T, 4, 4}, rng);
    auto b = random_param("b", {N, 2, T, 4, 4}, rng);
    auto c = random_param("c", {N, 3, T, 4, 4}, rng);
    auto const u = random_tensor({N, 6, T, 4, 4}, rng);
    run("concat_channels",
        [&](Graph<double> &g) {
          return ad::inner(g, ad::concat_channels<double>(g, {g.parameter(a), g.parameter(b), g.parameter(c)}), u);
        },
        {&a, &b, &c});
  }
  {
    auto rng = rng_for();
    auto x = random_param("input", {N, 3, T, 4, 4}, rng);
    auto const u = random_tensor({N, 1, T, 4, 4}, rng);
    run("channel_slice", [&](Graph<double> &g) { return ad::inner(g, ad::channel_slice(g, g.parameter(x), 1), u); },
        {&x});
  }

  Projector const proj(ProjectorGeometry(d.views, d.bins, d.image));
  {
    auto rng = rng_for();
    auto x = random_param("image", {N, 1, T, d.image, d.image}, rng);
    auto const u = random_tensor({N, 1, T, d.views, d.bins}, rng);
    run("linear_operator_forward",
        [&](Graph<double> &g) {
          return ad::inner(g, ad::linear_operator(g, g.parameter(x), proj, ad::Direction::Forward), u);
        },
        {&x});
  }
  {
    auto rng = rng_for();
    auto h = random_param("sinogram", {N, 1, T, d.views, d.bins}, rng);
    auto const u = random_tensor({N, 1, T, d.image, d.image}, rng);
    run("linear_operator_adjoint",
        [&](Graph<double> &g) {
          return ad::inner(g, ad::linear_operator(g, g.parameter(h), proj, ad::Direction::Adjoint), u);
        },
        {&h});
  }
  {
    auto rng = rng_for();
    auto p = random_param("pred", {N, C, T, 4, 4}, rng);
    auto const target = random_tensor({N, C, T, 4, 4}, rng);
    run("mse_loss", [&](Graph<double> &g) { return ad::mse_loss(g, g.parameter(p), target); }, {&p});
  }
  {
    auto rng = rng_for();
    auto p = random_param("input", {N, C, T, 4, 4}, rng);
    auto const u = random_tensor({N, C, T, 4, 4}, rng);
    run("inner", [&](Graph<double> &g) { return ad::inner(g, g.parameter(p), u); }, {&p});
  }

  for (std::size_t ext : {3, 1}) {
    NetworkConfig cfg;
    cfg.n_blocks = 2;
    cfg.hidden = d.hidden;
    cfg.temporal_extent = ext;
    auto params = init_network<double>(cfg, seed);
    // randomise everything, including the zero-initialised closing convs, so
    // every path carries gradient
    auto rng = rng_for();
    for (auto *p : params.parameters()) {
      bool const is_gamma = p->name.ends_with(".gamma");
      for (auto &v : p->value.data()) { v = is_gamma ? 1.0 + 0.2 * rng.normal() : 0.2 * rng.normal(); }
    }
    auto y = random_tensor({N, 1, T, d.views, d.bins}, rng);
    for (auto &v : y.data()) { v = std::abs(v); }
    auto const target = random_tensor({N, 1, T, d.image, d.image}, rng);
    run(ext == 3 ? "stpdnet_k2" : "lpd_k2",
        [&](Graph<double> &g) { return ad::mse_loss(g, build_network(g, params, g.constant(y), proj), target); },
        params.parameters());
  }
  return out;
}

} // namespace stpd
