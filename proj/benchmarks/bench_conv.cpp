#include <stpd/autodiff.hpp>

#include <benchmark/benchmark.h>

using namespace stpd;

namespace {

// one hidden layer of a dual / primal net: 32 -> 32 channels, 18 frames
void BM_Conv3d(benchmark::State &state)
{
  auto const ext = static_cast<std::size_t>(state.range(0));
  auto const hw = static_cast<std::size_t>(state.range(1));
  std::size_t const c = 32, t = 18;
  TensorF x({1, c, t, hw, hw}, 0.5f);
  ad::Parameter<float> w("w", TensorF({c, c, ext, 3, 3}, 0.01f));
  ad::Parameter<float> b("b", TensorF({c}, 0.0f));
  for (auto _ : state) {
    ad::Graph<float> g;
    auto const y = ad::conv3d(g, g.constant(x), g.parameter(w), g.parameter(b));
    benchmark::DoNotOptimize(g.value(y).data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * ext * 9 * t * hw * hw));
}
BENCHMARK(BM_Conv3d)->Args({1, 64})->Args({3, 64})->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State &state)
{
  auto const ext = static_cast<std::size_t>(state.range(0));
  std::size_t const c = 32, t = 18, hw = 64;
  TensorF x({1, c, t, hw, hw}, 0.5f);
  ad::Parameter<float> w("w", TensorF({c, c, ext, 3, 3}, 0.01f));
  ad::Parameter<float> b("b", TensorF({c}, 0.0f));
  for (auto _ : state) {
    ad::Graph<float> g;
    auto const y = ad::conv3d(g, g.constant(x), g.parameter(w), g.parameter(b));
    auto const loss = ad::mse_loss(g, y, TensorF(g.value(y).shape(), 0.0f));
    g.backward(loss);
    benchmark::DoNotOptimize(w.grad.data().data());
  }
}
BENCHMARK(BM_Conv3dBackward)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

} // namespace
