#include "stpd/autodiff.hpp"
#include "stpd/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stpd::ad {

template <typename Real>
void adam_step(std::span<Real> params, std::span<Real const> grads, AdamState<Real> &state, double lr,
               AdamConfig const &cfg)
{
  if (params.size() != grads.size()) { throw ParameterError("adam: parameter and gradient sizes differ"); }
  for (auto g : grads) {
    if (!std::isfinite(static_cast<double>(g))) { throw ParameterError("diverged gradient"); }
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), Real(0));
    state.v.assign(params.size(), Real(0));
    state.step = 0;
  }
  ++state.step;
  double const c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double const c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto const b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Real const g = grads[i];
    state.m[i] = b1 * state.m[i] + (Real(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Real(1) - b2) * g * g;
    double const mhat = state.m[i] / c1;
    double const vhat = state.v[i] / c2;
    params[i] = static_cast<Real>(params[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename Real>
Adam<Real>::Adam(std::vector<Parameter<Real> *> params, AdamConfig cfg)
  : params_(std::move(params))
  , states_(params_.size())
  , cfg_(cfg)
{
}

template <typename Real>
void Adam<Real>::step(double lr)
{
  for (auto *p : params_) {
    for (auto g : p->grad.data()) {
      if (!std::isfinite(static_cast<double>(g))) { throw ParameterError("diverged gradient in " + p->name); }
    }
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto *p = params_[k];
    adam_step<Real>(p->value.data(), p->grad.data(), states_[k], lr, cfg_);
  }
}

template <typename Real>
void Adam<Real>::zero_grad()
{
  for (auto *p : params_) { p->zero_grad(); }
}

template void adam_step(std::span<float>, std::span<float const>, AdamState<float> &, double, AdamConfig const &);
template void adam_step(std::span<double>, std::span<double const>, AdamState<double> &, double,
                        AdamConfig const &);
template class Adam<float>;
template class Adam<double>;

GradCheckReport grad_check(std::function<Var(Graph<double> &)> const &build_loss,
                           std::vector<Parameter<double> *> const &params,
                           GradCheckOptions const &options)
{
  if (!(options.step > 0)) { throw ParameterError("grad_check: step must be > 0"); }
  auto eval = [&](std::vector<std::uint8_t> &pattern) {
    Graph<double> g;
    g.track_activation_pattern(true);
    Var loss = build_loss(g);
    pattern = std::move(g.activation_pattern());
    return g.value(loss)[0];
  };
  std::vector<std::uint8_t> base, up_pattern, down_pattern;
  eval(base);

  for (auto *p : params) { p->zero_grad(); }
  {
    Graph<double> g;
    Var loss = build_loss(g);
    g.backward(loss);
  }

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) { picks.emplace_back(k, i); }
  }
  if (picks.size() > options.max_elements) {
    // partial Fisher-Yates with the counter RNG
    CounterRng rng(options.seed, 0x67726164, 0);
    for (std::size_t i = 0; i < options.max_elements; ++i) {
      std::size_t const j = i + static_cast<std::size_t>(rng.next_u64() % (picks.size() - i));
      std::swap(picks[i], picks[j]);
    }
    picks.resize(options.max_elements);
  }

  GradCheckReport report;
  report.max_rel_error = 0;
  for (auto [k, i] : picks) {
    auto *p = params[k];
    double const orig = p->value[i];
    double step = options.step;
    double numeric = 0;
    bool crossed = true;
    for (; step >= options.min_step; step /= 10) {
      p->value[i] = orig + step;
      double const up = eval(up_pattern);
      p->value[i] = orig - step;
      double const down = eval(down_pattern);
      numeric = (up - down) / (2 * step);
      crossed = up_pattern != base || down_pattern != base;
      if (!crossed) { break; }
    }
    p->value[i] = orig;
    if (step < options.step) { ++report.reduced_steps; }
    if (crossed) {
      ++report.skipped_kinks;
      continue;
    }
    double const analytic = p->grad[i];
    double const denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    double const rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (rel > report.max_rel_error || report.checked == 1) {
      report.max_rel_error = rel;
      report.worst_parameter = p->name;
      report.worst_index = i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  return report;
}

} // namespace stpd::ad
