#include "esrsim/ensemble.hpp"
#include "esrsim/field_geometry.hpp"
#include "esrsim/spin_model.hpp"

#include <benchmark/benchmark.h>

using namespace esrsim;

static void BM_Diagonalize(benchmark::State& state) {
    const SpinSystem sys;
    const auto h = build_hamiltonian(Field(0, 0, 5.16e-3), sys);
    for (auto _ : state) benchmark::DoNotOptimize(diagonalize(h));
}
BENCHMARK(BM_Diagonalize);

static void BM_CrossingField(benchmark::State& state) {
    const SpinSystem sys;
    for (auto _ : state)
        benchmark::DoNotOptimize(find_crossing_field(sys, label(4, -4), label(5, -5), 7.24e9, 0.0, 10e-3));
}
BENCHMARK(BM_CrossingField)->Unit(benchmark::kMillisecond);

static void BM_VacuumField(benchmark::State& state) {
    StripGeometry g;
    g.filaments_x = static_cast<int>(state.range(0));
    double y = -100e-9;
    for (auto _ : state) benchmark::DoNotOptimize(vacuum_field(1e-6, y, g));
    state.SetItemsProcessed(state.iterations() * g.filaments_x * g.filaments_y);
}
BENCHMARK(BM_VacuumField)->Arg(500)->Arg(2000);

static void BM_CouplingDistribution(benchmark::State& state) {
    CouplingRegion r;
    r.x_samples = 101;
    r.depth_samples = 61;
    const auto profile = ImplantationProfile::skew_gaussian();
    for (auto _ : state)
        benchmark::DoNotOptimize(coupling_distribution(StripGeometry{}, profile, r, 0.0, 0.47, 50));
}
BENCHMARK(BM_CouplingDistribution)->Unit(benchmark::kMillisecond);

// Free evolution between pulses over 100 us; items are sub-ensemble steps.
static void BM_IntegratorHahn(benchmark::State& state) {
    CavityParams cav;
    CouplingDistribution c;
    c.g = {50.0, 60.0, 70.0, 80.0, 90.0};
    c.weight = {0.2, 0.2, 0.2, 0.2, 0.2};
    FrequencyDistribution f;
    f.kind = LineShape::Lorentzian;
    f.width = 25e3;
    f.bins = static_cast<int>(state.range(0));
    EnsembleState st;
    st.spins = discretize_ensemble(c, f, 1e4, cav, {});
    SequenceParams sp;
    sp.tau = 50e-6;
    const auto seq = build_sequence(SequenceKind::Hahn, sp);
    SolverConfig sc;
    sc.record_spins = false;
    long steps = 0;
    for (auto _ : state) {
        const auto r = integrate(st, cav, seq, sc);
        steps += r.accepted_steps;
    }
    state.SetItemsProcessed(steps * static_cast<long>(st.spins.size()));
}
BENCHMARK(BM_IntegratorHahn)->Arg(90)->Arg(450)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
