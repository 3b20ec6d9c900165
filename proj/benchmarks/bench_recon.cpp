#include <stpd/recon.hpp>
#include <stpd/simulate.hpp>

#include <benchmark/benchmark.h>

using namespace stpd;

namespace {

struct Scan
{
  FrameSchedule sched = FrameSchedule::standard();
  Projector proj{ProjectorGeometry(80, 64, 64)};
  ScanData<double> data;

  Scan()
  {
    auto const ph = make_phantom(default_phantom_spec(64, 1, 1.0), sched);
    data = simulate_scan<double>(ph.activity, proj, ScanModel::interpolated(sched), 1);
  }
};

Scan const &scan()
{
  static Scan const s;
  return s;
}

void BM_Mlem(benchmark::State &state)
{
  auto const &s = scan();
  auto const x0 = fov_ones<double>(s.proj.geometry(), s.sched.size());
  for (auto _ : state) {
    auto x = mlem<double>(s.data.counts, s.proj, {}, static_cast<std::size_t>(state.range(0)), x0);
    benchmark::DoNotOptimize(x.data().data());
  }
}
BENCHMARK(BM_Mlem)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_BuildKernel(benchmark::State &state)
{
  auto const &s = scan();
  auto const composite = composite_images(s.data.counts, TensorD{}, s.sched, s.proj);
  KernelOptions opt;
  opt.k_neighbors = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto k = build_st_kernel(composite, s.proj.geometry(), s.sched.size(), opt);
    benchmark::DoNotOptimize(k.spatial.weight.data());
  }
}
BENCHMARK(BM_BuildKernel)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_KemSt(benchmark::State &state)
{
  auto const &s = scan();
  auto const composite = composite_images(s.data.counts, TensorD{}, s.sched, s.proj);
  auto const kernel = build_st_kernel(composite, s.proj.geometry(), s.sched.size(), KernelOptions{});
  for (auto _ : state) {
    auto x = kem_st(s.data.counts, s.proj, kernel, 20);
    benchmark::DoNotOptimize(x.data().data());
  }
}
BENCHMARK(BM_KemSt)->Unit(benchmark::kMillisecond);

} // namespace
