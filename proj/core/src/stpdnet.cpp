#include "stpd/stpdnet.hpp"

#include "stpd/simulate.hpp"

#include <json.hpp>

#include <cmath>

namespace stpd {

using ad::Graph;
using ad::Var;

void NetworkConfig::validate() const
{
  if (n_blocks < 1) { throw ParameterError("network: n_blocks must be >= 1"); }
  if (n_primal < 1 || n_dual < 1 || hidden < 1) { throw ParameterError("network: channel counts must be >= 1"); }
  if (depth < 1) { throw ParameterError("network: depth must be >= 1"); }
  if (temporal_extent != 1 && temporal_extent != 3) {
    throw ParameterError("network: temporal_extent must be 1 or 3, got " + std::to_string(temporal_extent));
  }
  if (primal_projected >= n_primal) { throw ParameterError("network: primal_projected must be < n_primal"); }
  if (dual_projected >= n_dual) { throw ParameterError("network: dual_projected must be < n_dual"); }
  if (!std::isfinite(final_bn_gamma)) { throw ParameterError("network: final_bn_gamma must be finite"); }
}

NetworkConfig NetworkConfig::lpd_variant() const
{
  auto c = *this;
  c.temporal_extent = 1;
  return c;
}

std::string NetworkConfig::to_json() const
{
  nlohmann::ordered_json j;
  j["n_blocks"] = n_blocks;
  j["n_primal"] = n_primal;
  j["n_dual"] = n_dual;
  j["hidden"] = hidden;
  j["depth"] = depth;
  j["temporal_extent"] = temporal_extent;
  j["correction"] = correction;
  j["primal_projected"] = primal_projected;
  j["dual_projected"] = dual_projected;
  j["final_bn_gamma"] = final_bn_gamma;
  return j.dump(2);
}

NetworkConfig NetworkConfig::from_json(std::string const &text)
{
  NetworkConfig c;
  try {
    auto const j = nlohmann::json::parse(text);
    c.n_blocks = j.at("n_blocks").get<std::size_t>();
    c.n_primal = j.at("n_primal").get<std::size_t>();
    c.n_dual = j.at("n_dual").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.temporal_extent = j.at("temporal_extent").get<std::size_t>();
    c.correction = j.at("correction").get<bool>();
    c.primal_projected = j.at("primal_projected").get<std::size_t>();
    c.dual_projected = j.at("dual_projected").get<std::size_t>();
    c.final_bn_gamma = j.at("final_bn_gamma").get<double>();
  } catch (nlohmann::json::exception const &e) {
    throw ParameterError(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::size_t net_count(std::size_t in, std::size_t out, NetworkConfig const &c)
{
  std::size_t const k = c.temporal_extent * 9;
  std::size_t total = 0;
  for (std::size_t l = 0; l < c.depth; ++l) {
    std::size_t const ci = l == 0 ? in : c.hidden;
    std::size_t const co = l + 1 == c.depth ? out : c.hidden;
    total += ci * co * k + co + 2 * co;
  }
  return total;
}

std::size_t dual_inputs(NetworkConfig const &c) { return c.n_dual + 2; }
std::size_t primal_inputs(NetworkConfig const &c) { return c.n_primal + 1; }

} // namespace

std::size_t parameter_count(NetworkConfig const &cfg)
{
  cfg.validate();
  std::size_t per_block = net_count(dual_inputs(cfg), cfg.n_dual, cfg) + net_count(primal_inputs(cfg), cfg.n_primal, cfg);
  if (cfg.correction) { per_block += 2 * (cfg.temporal_extent * 9 + 1); }
  return cfg.n_blocks * per_block;
}

template <typename Real>
std::vector<ad::Parameter<Real> *> NetworkParams<Real>::parameters()
{
  std::vector<ad::Parameter<Real> *> out;
  auto add_net = [&](ConvNet<Real> &net) {
    for (auto &l : net.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
      out.push_back(&l.bn.gamma);
      out.push_back(&l.bn.beta);
    }
  };
  for (auto &b : blocks) {
    add_net(b.dual);
    add_net(b.primal);
    if (config.correction) {
      out.push_back(&b.forward.weight);
      out.push_back(&b.forward.bias);
      out.push_back(&b.adjoint.weight);
      out.push_back(&b.adjoint.bias);
    }
  }
  return out;
}

template <typename Real>
std::vector<ad::BatchNormState<Real> *> NetworkParams<Real>::batch_norms()
{
  std::vector<ad::BatchNormState<Real> *> out;
  for (auto &b : blocks) {
    for (auto *net : {&b.dual, &b.primal}) {
      for (auto &l : net->layers) { out.push_back(&l.bn); }
    }
  }
  return out;
}

template <typename Real>
void NetworkParams<Real>::set_mode(ad::BnMode mode)
{
  for (auto *bn : batch_norms()) { bn->mode = mode; }
}

template <typename Real>
std::size_t NetworkParams<Real>::parameter_count() const
{
  std::size_t n = 0;
  for (auto *p : const_cast<NetworkParams *>(this)->parameters()) { n += p->value.size(); }
  return n;
}

namespace {

template <typename Real>
ConvNet<Real> make_net(std::string const &name,
                       std::size_t in,
                       std::size_t out,
                       NetworkConfig const &c,
                       std::uint64_t seed,
                       std::uint64_t stream)
{
  ConvNet<Real> net;
  std::size_t const kt = c.temporal_extent;
  for (std::size_t l = 0; l < c.depth; ++l) {
    std::size_t const ci = l == 0 ? in : c.hidden;
    bool const last = l + 1 == c.depth;
    std::size_t const co = last ? out : c.hidden;
    std::string const base = name + ".conv" + std::to_string(l);
    Tensor<Real> w({co, ci, kt, 3, 3});
    if (!last) {
      CounterRng rng(seed, stream, l);
      double const sd = std::sqrt(2.0 / static_cast<double>(ci * kt * 9));
      for (auto &v : w.data()) { v = static_cast<Real>(sd * rng.normal()); }
    }
    ConvLayer<Real> layer{{base + ".weight", std::move(w)},
                          {base + ".bias", Tensor<Real>({co})},
                          ad::BatchNormState<Real>(name + ".bn" + std::to_string(l), co)};
    if (last) { layer.bn.gamma.value.fill(static_cast<Real>(c.final_bn_gamma)); }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <typename Real>
Correction<Real> make_correction(std::string const &name, NetworkConfig const &c)
{
  Tensor<Real> w({1, 1, c.temporal_extent, 3, 3});
  w[(c.temporal_extent / 2) * 9 + 4] = Real(1);
  return {{name + ".weight", std::move(w)}, {name + ".bias", Tensor<Real>({1})}};
}

template <typename Real>
Var run_net(Graph<Real> &g, ConvNet<Real> &net, Var x)
{
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto &layer = net.layers[l];
    x = ad::conv3d(g, x, g.parameter(layer.weight), g.parameter(layer.bias));
    x = ad::batch_norm(g, x, layer.bn);
    if (l + 1 < net.layers.size()) { x = ad::relu(g, x); }
  }
  return x;
}

template <typename Real>
Var correct(Graph<Real> &g, Correction<Real> &c, Var x, bool enabled)
{
  if (!enabled) { return x; }
  return ad::conv3d(g, x, g.parameter(c.weight), g.parameter(c.bias));
}

/// One dual then one primal update, in place on (x, h).
template <typename Real>
void run_block(Graph<Real> &g, NetworkConfig const &c, Block<Real> &b, Var &x, Var &h, Var y, Projector const &proj)
{
  Var gx = ad::linear_operator(g, ad::channel_slice(g, x, c.primal_projected), proj, ad::Direction::Forward);
  Var p = correct(g, b.forward, gx, c.correction);
  h = ad::add(g, h, run_net(g, b.dual, ad::concat_channels<Real>(g, {h, p, y})));
  Var gh = ad::linear_operator(g, ad::channel_slice(g, h, c.dual_projected), proj, ad::Direction::Adjoint);
  Var q = correct(g, b.adjoint, gh, c.correction);
  x = ad::add(g, x, run_net(g, b.primal, ad::concat_channels<Real>(g, {x, q})));
}

void check_measurements(Shape const &s, ProjectorGeometry const &geo)
{
  if (s.size() != 5 || s[1] != 1 || s[3] != geo.n_views() || s[4] != geo.n_bins()) {
    throw ParameterError("stpdnet: measurements must be N x 1 x T x " + std::to_string(geo.n_views()) + " x " +
                         std::to_string(geo.n_bins()) + ", got " + shape_string(s));
  }
}

} // namespace

template <typename Real>
NetworkParams<Real> init_network(NetworkConfig const &cfg, std::uint64_t seed)
{
  cfg.validate();
  NetworkParams<Real> p;
  p.config = cfg;
  for (std::size_t k = 0; k < cfg.n_blocks; ++k) {
    std::string const base = "block" + std::to_string(k);
    Block<Real> b;
    b.dual = make_net<Real>(base + ".dual", dual_inputs(cfg), cfg.n_dual, cfg, seed, 2 * k);
    b.primal = make_net<Real>(base + ".primal", primal_inputs(cfg), cfg.n_primal, cfg, seed, 2 * k + 1);
    b.forward = make_correction<Real>(base + ".corr_fwd", cfg);
    b.adjoint = make_correction<Real>(base + ".corr_adj", cfg);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

template <typename Real>
Var build_network(Graph<Real> &g, NetworkParams<Real> &params, Var y, Projector const &projector)
{
  auto const &c = params.config;
  auto const &geo = projector.geometry();
  auto const &ys = g.value(y).shape();
  check_measurements(ys, geo);
  if (params.blocks.size() != c.n_blocks) { throw ParameterError("stpdnet: params do not match their config"); }
  std::size_t const N = ys[0], T = ys[2], n = geo.image_size();
  Var x = g.constant(Tensor<Real>({N, c.n_primal, T, n, n}));
  Var h = g.constant(Tensor<Real>({N, c.n_dual, T, geo.n_views(), geo.n_bins()}));
  for (auto &b : params.blocks) { run_block(g, c, b, x, h, y, projector); }
  return ad::channel_slice(g, x, 0);
}

template <typename Real>
Tensor<Real> stpdnet_forward(NetworkParams<Real> &params, Tensor<Real> const &y, Projector const &projector)
{
  auto const &c = params.config;
  auto const &geo = projector.geometry();
  bool const batched = y.rank() == 4;
  if (y.rank() != 3 && !batched) {
    throw ParameterError("stpdnet: measurements must be T x V x B or N x T x V x B, got " + shape_string(y.shape()));
  }
  std::size_t const N = batched ? y.dim(0) : 1;
  std::size_t const T = y.dim(y.rank() - 3);
  Tensor<Real> const y5 = y.reshaped({N, 1, T, y.dim(y.rank() - 2), y.dim(y.rank() - 1)});
  check_measurements(y5.shape(), geo);
  if (params.blocks.size() != c.n_blocks) { throw ParameterError("stpdnet: params do not match their config"); }

  std::size_t const n = geo.image_size();
  Tensor<Real> x({N, c.n_primal, T, n, n});
  Tensor<Real> h({N, c.n_dual, T, geo.n_views(), geo.n_bins()});
  for (auto &b : params.blocks) {
    Graph<Real> g;
    Var xv = g.constant(std::move(x));
    Var hv = g.constant(std::move(h));
    Var yv = g.constant(y5);
    run_block(g, c, b, xv, hv, yv, projector);
    x = g.value(xv);
    h = g.value(hv);
  }
  Tensor<Real> out({N, T, n, n});
  for (std::size_t i = 0; i < N; ++i) {
    std::copy_n(x.data().data() + i * c.n_primal * T * n * n, T * n * n, out.data().data() + i * T * n * n);
  }
  if (!batched) { out = std::move(out).reshaped({T, n, n}); }
  return out;
}

template struct NetworkParams<float>;
template struct NetworkParams<double>;
template NetworkParams<float> init_network(NetworkConfig const &, std::uint64_t);
template NetworkParams<double> init_network(NetworkConfig const &, std::uint64_t);
template Var build_network(Graph<float> &, NetworkParams<float> &, Var, Projector const &);
template Var build_network(Graph<double> &, NetworkParams<double> &, Var, Projector const &);
template Tensor<float> stpdnet_forward(NetworkParams<float> &, Tensor<float> const &, Projector const &);
template Tensor<double> stpdnet_forward(NetworkParams<double> &, Tensor<double> const &, Projector const &);

} // namespace stpd
