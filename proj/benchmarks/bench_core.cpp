// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Hot-path microbenchmarks at the default operating shape: 4 channels,
// 16 kHz, fft 512 / hop 128 (255 bins after the DC split), 1 s of audio.

#include <benchmark/benchmark.h>

#include <vector>

#include "uadps/fcp.hpp"
#include "uadps/guidance.hpp"
#include "uadps/parallel.hpp"
#include "uadps/pipeline.hpp"
#include "uadps/rng.hpp"
#include "uadps/scene.hpp"
#include "uadps/scm.hpp"
#include "uadps/spectral.hpp"

namespace {

using namespace uadps;

Scene bench_scene(std::uint64_t seed) {
  SceneSpec sp;
  sp.channels = 4;
  sp.sources = 1;
  sp.duration_s = 1.0;
  sp.seed = seed;
  return make_scene(sp);
}

std::vector<double> bench_signal(int n, std::uint64_t seed) {
  GaussianStream g(seed);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (double& v : x) v = g();
  return x;
}

void BM_stft(benchmark::State& state) {
  std::vector<double> x = bench_signal(16000, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(stft(x, 512, 128, true));
}
BENCHMARK(BM_stft);

void BM_istft(benchmark::State& state) {
  std::vector<double> x = bench_signal(16000, 2);
  Spectrogram s = stft(x, 512, 128, true);
  for (auto _ : state)
    benchmark::DoNotOptimize(istft(s, static_cast<int>(x.size())));
}
BENCHMARK(BM_istft);

void BM_fcp_estimate(benchmark::State& state) {
  set_max_threads(1);
  Scene sc = bench_scene(3);
  FcpConfig cfg;
  cfg.n_taps = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(fcp_estimate(sc.pseudo[0], sc.mixture, cfg));
}
BENCHMARK(BM_fcp_estimate)->Arg(1)->Arg(13);

void BM_scm_ema(benchmark::State& state) {
  set_max_threads(1);
  Scene sc = bench_scene(4);
  FcpConfig cfg;
  AtfFilter h = fcp_estimate(sc.pseudo[0], sc.mixture, cfg);
  MultiSpectrogram noise = estimate_noise(sc.mixture, {sc.pseudo[0]}, {h});
  for (auto _ : state)
    benchmark::DoNotOptimize(scm_ema(noise, 0.95));
}
BENCHMARK(BM_scm_ema);

void BM_likelihood_grad(benchmark::State& state) {
  set_max_threads(1);
  Scene sc = bench_scene(5);
  Schedule sched = make_schedule();
  GuidanceConfig cfg;
  cfg.grad_mode =
      state.range(0) == 0 ? GradMode::kDetachedChain : GradMode::kFullVjp;
  PrepareScmResult pr = prepare_scm(sc.mixture, sc.pseudo, cfg.fcp, 0.95);
  Spectrogram truth = compress(sc.clean[0]);
  OracleDenoiser den(truth, sched);
  std::vector<Denoiser*> dens{&den};
  GaussianStream g(6);
  std::vector<Spectrogram> xbar{forward_to_step(truth, 300, sched, g)};
  for (auto _ : state)
    benchmark::DoNotOptimize(likelihood_grad(xbar, dens, 300, sc.mixture,
                                             pr.inv_scm, cfg));
}
BENCHMARK(BM_likelihood_grad)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
