// Serial reference assembly against the batched OpenMP assembler.
//   bench_assembly --benchmark_filter=Parallel

#include <benchmark/benchmark.h>

#include <random>

#include "sgdyn/assembly.hpp"

using namespace sgdyn;

namespace {

struct Case {
  SplineSpace space;
  ConstraintSet constraints;
  FieldCoeffs u[3];

  explicit Case(int n) : space(SplineSpace::uniform(n, false)), constraints(ConstraintSet::boundary_dirichlet(space)) {
    std::mt19937_64 rng(n);
    std::normal_distribution<double> d(0.0, 0.02);
    const DofMap map(3 * space.num_control_points(), constraints);
    for (auto& f : u) {
      f = FieldCoeffs::zeros(space);
      for (auto& v : f.data) v = d(rng);
      map.apply_constraints(f);
    }
  }
};

SchemeConfig scheme_of(int k) {
  switch (k) {
    case 0: return SchemeConfig::gonzalez();
    case 1: return SchemeConfig::taylor_full();
    default: return SchemeConfig::taylor_reduced();
  }
}

template <bool kParallel>
void assemble(benchmark::State& state) {
  const Case c(static_cast<int>(state.range(0)));
  AssemblyOptions o;
  o.threads = static_cast<int>(state.range(2));
  const Assembler a(c.space, c.constraints, o);
  const auto k = make_dynamic_kernel(ThreeWellEnergy(MaterialParams{}), scheme_of(static_cast<int>(state.range(1))));
  for (auto _ : state) {
    AssembledSystem s = kParallel ? a.dynamic(*k, c.u[0], c.u[1], c.u[2], 1e-3, true)
                                  : a.dynamic_reference(*k, c.u[0], c.u[1], c.u[2], 1e-3, true);
    benchmark::DoNotOptimize(s.residual.data());
  }
  state.SetLabel(to_string(scheme_of(static_cast<int>(state.range(1))).kind));
  state.counters["elements/s"] =
      benchmark::Counter(double(c.space.num_elements()) * state.iterations(), benchmark::Counter::kIsRate);
}

void args(benchmark::internal::Benchmark* b, bool threads) {
  for (int n : {4, 8})
    for (int s : {0, 1, 2})
      for (int t : threads ? std::vector<int>{1, 2, 4} : std::vector<int>{1}) b->Args({n, s, t});
  b->ArgNames({"n", "scheme", "threads"})->Unit(benchmark::kMillisecond)->UseRealTime();
}

}  // namespace

BENCHMARK_TEMPLATE(assemble, false)->Name("SerialReference")->Apply([](auto* b) { args(b, false); });
BENCHMARK_TEMPLATE(assemble, true)->Name("Parallel")->Apply([](auto* b) { args(b, true); });

BENCHMARK_MAIN();
