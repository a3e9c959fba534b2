#include <benchmark/benchmark.h>

#include <random>

#include "cacc/controller.hpp"
#include "cacc/gp.hpp"
#include "cacc/miqp.hpp"
#include "cacc/mld.hpp"
#include "cacc/qp.hpp"

namespace {

cacc::GpWindow sample_window(std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.3);
  cacc::GpWindow w;
  for (int i = 0; i < cacc::kGpWindow; ++i) {
    w.time_s[i] = 0.1 * i;
    w.speed[i] = 27.0 - 0.8 * i + noise(rng);
  }
  return w;
}

void BM_GpFit(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const cacc::GpWindow w = sample_window(rng);
  for (auto _ : state) benchmark::DoNotOptimize(cacc::fit_gp(w));
}
BENCHMARK(BM_GpFit);

void BM_GpForecast(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const cacc::GpModel m = cacc::fit_gp(sample_window(rng));
  for (auto _ : state)
    benchmark::DoNotOptimize(cacc::forecast(m, 0.5, 7, 0.1, 30.0));
}
BENCHMARK(BM_GpForecast);

cacc::MldInputs mld_inputs(bool stochastic, double gap_err) {
  cacc::MldInputs in;
  in.x0 = {gap_err, -1.0, -0.5};
  in.speed0 = 20.0;
  in.u_prev = -0.5;
  in.sys = cacc::discrete_system(in.params, 0.1);
  in.plan.source =
      stochastic ? cacc::PlanSource::kGp : cacc::PlanSource::kCommunicated;
  in.plan.accel.assign(7, -2.0);
  if (stochastic) {
    in.plan.noise.resize(7);
    for (int k = 0; k < 7; ++k)
      in.plan.noise[k] = cacc::discretize(0.1 + 0.05 * k);
  }
  return in;
}

void BM_MldBuild(benchmark::State& state) {
  const cacc::MldInputs in = mld_inputs(true, -0.5);
  for (auto _ : state) benchmark::DoNotOptimize(cacc::build_mld(in));
}
BENCHMARK(BM_MldBuild);

void BM_QpRelaxation(benchmark::State& state) {
  const cacc::MldProgram prog = cacc::build_mld(mld_inputs(true, -0.5));
  std::vector<int> fix(prog.binaries.size(), -1);
  for (std::size_t i = 0; i < prog.binaries.size(); ++i)
    fix[i] = prog.binaries[i].fixed;
  const cacc::ReducedQp red = cacc::reduce_program(prog, fix);
  for (auto _ : state) benchmark::DoNotOptimize(cacc::solve_qp(red.qp));
}
BENCHMARK(BM_QpRelaxation);

void BM_MiqpNominal(benchmark::State& state) {
  const cacc::MldProgram prog = cacc::build_mld(mld_inputs(true, -0.5));
  for (auto _ : state) benchmark::DoNotOptimize(cacc::solve_miqp(prog));
}
BENCHMARK(BM_MiqpNominal);

void BM_MiqpBraking(benchmark::State& state) {
  const cacc::MldProgram prog = cacc::build_mld(mld_inputs(true, -1.4));
  for (auto _ : state) benchmark::DoNotOptimize(cacc::solve_miqp(prog));
}
BENCHMARK(BM_MiqpBraking);

}  // namespace

BENCHMARK_MAIN();
