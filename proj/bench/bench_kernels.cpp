// Parallel kernels against their serial references.

#include "moek/numkit/linalg.hpp"
#include "moek/numkit/reference.hpp"
#include "moek/placement/placement.hpp"
#include "moek/quant/hessian.hpp"
#include "moek/quant/smoothing.hpp"
#include "moek/trace/trace.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace moek;
using numkit::Matrix;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Matrix m(rows, cols);
    for (double& v : m.data())
        v = d(rng);
    return m;
}

void BM_matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(numkit::matmul(a, b));
}

void BM_matmul_reference(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(numkit::reference::matmul(a, b));
}

void BM_gram(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(n, 4 * n, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(numkit::gram(x));
}

void BM_gram_reference(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(n, 4 * n, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(numkit::reference::gram(x));
}

void BM_smoothing_search(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix w = random_matrix(n, n, 4), x = random_matrix(n, 2 * n, 5);
    for (auto _ : state)
        benchmark::DoNotOptimize(quant::search_smoothing(w, x, quant::JointQuantConfig{}));
}

void BM_hessian_quantize(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix w = random_matrix(n, n, 6);
    const Matrix h = quant::build_hessian(random_matrix(n, 2 * n, 7));
    const quant::QuantConfig cfg{4, false, quant::Granularity::per_row};
    for (auto _ : state)
        benchmark::DoNotOptimize(quant::hessian_quantize(w, h, cfg));
}

void BM_hessian_quantize_direct(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix w = random_matrix(n, n, 6);
    const Matrix h = quant::build_hessian(random_matrix(n, 2 * n, 7));
    const quant::QuantConfig cfg{4, false, quant::Granularity::per_row};
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    for (auto _ : state)
        benchmark::DoNotOptimize(quant::reference::hessian_quantize_direct(w, h, cfg, order));
}

struct PlanFixture
{
    trace::Trace t;
    placement::PlacementPlan plan;
    PlanFixture()
    {
        trace::GenConfig g;
        g.n_decode_tokens = 5000;
        t = trace::generate_trace(g);
        plan = placement::plan_frequency(trace::expert_freq(t), 128);
    }
};

void BM_evaluate_plan(benchmark::State& state)
{
    static const PlanFixture f;
    for (auto _ : state)
        benchmark::DoNotOptimize(placement::evaluate_plan(f.plan, f.t));
}

void BM_evaluate_plan_reference(benchmark::State& state)
{
    static const PlanFixture f;
    for (auto _ : state)
        benchmark::DoNotOptimize(placement::reference::evaluate_plan(f.plan, f.t));
}

} // namespace

BENCHMARK(BM_matmul)->Arg(64)->Arg(256);
BENCHMARK(BM_matmul_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_gram)->Arg(64)->Arg(256);
BENCHMARK(BM_gram_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_smoothing_search)->Arg(32)->Arg(128);
BENCHMARK(BM_hessian_quantize)->Arg(32)->Arg(64);
BENCHMARK(BM_hessian_quantize_direct)->Arg(32)->Arg(64);
BENCHMARK(BM_evaluate_plan);
BENCHMARK(BM_evaluate_plan_reference);

BENCHMARK_MAIN();
