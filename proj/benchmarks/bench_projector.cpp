#include <stpd/projector.hpp>

#include <benchmark/benchmark.h>

using namespace stpd;

namespace {

void BM_Forward(benchmark::State &state)
{
  auto const n = static_cast<std::size_t>(state.range(0));
  Projector const p(ProjectorGeometry(n + n / 4, n, n));
  std::vector<float> x(p.geometry().n_pixels(), 1.0f), y(p.geometry().n_rays());
  for (auto _ : state) {
    p.forward<float>(x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.geometry().n_rays()));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(128);

void BM_Adjoint(benchmark::State &state)
{
  auto const n = static_cast<std::size_t>(state.range(0));
  Projector const p(ProjectorGeometry(n + n / 4, n, n));
  std::vector<float> y(p.geometry().n_rays(), 1.0f), x(p.geometry().n_pixels());
  for (auto _ : state) {
    p.adjoint<float>(y, x);
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.geometry().n_rays()));
}
BENCHMARK(BM_Adjoint)->Arg(64)->Arg(128);

void BM_BuildSystemMatrix(benchmark::State &state)
{
  auto const n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Projector p(ProjectorGeometry(n + n / 4, n, n));
    benchmark::DoNotOptimize(&p);
  }
}
BENCHMARK(BM_BuildSystemMatrix)->Arg(64)->Unit(benchmark::kMillisecond);

} // namespace
