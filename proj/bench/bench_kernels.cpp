// Serial reference kernels against the blocked OpenMP kernels on a hidden
// layer of the default network (256 x 256) at several batch sizes.
#include "nccqr/kernels.hpp"
#include "nccqr/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

struct LayerData {
  Eigen::MatrixXd W, in, grad_out;
  Eigen::VectorXd b;

  explicit LayerData(Eigen::Index n) : W(256, 256), in(256, n), grad_out(256, n), b(256) {
    nccqr::Rng rng(1);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.normal() / 16.0;
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < grad_out.size(); ++i) grad_out.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.normal();
  }
};

void BM_ForwardReference(benchmark::State& state) {
  LayerData d(state.range(0));
  Eigen::MatrixXd out;
  for (auto _ : state) {
    nccqr::kernels::reference::affine_forward(d.W, d.b, d.in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ForwardBlocked(benchmark::State& state) {
  LayerData d(state.range(0));
  Eigen::MatrixXd out;
  for (auto _ : state) {
    nccqr::kernels::affine_forward(d.W, d.b, d.in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BackwardReference(benchmark::State& state) {
  LayerData d(state.range(0));
  Eigen::MatrixXd gW, gin;
  Eigen::VectorXd gb;
  for (auto _ : state) {
    nccqr::kernels::reference::affine_backward(d.W, d.in, d.grad_out, gW, gb, &gin);
    benchmark::DoNotOptimize(gW.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BackwardBlocked(benchmark::State& state) {
  LayerData d(state.range(0));
  Eigen::MatrixXd gW, gin;
  Eigen::VectorXd gb;
  for (auto _ : state) {
    nccqr::kernels::affine_backward(d.W, d.in, d.grad_out, gW, gb, &gin);
    benchmark::DoNotOptimize(gW.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ForwardReference)->Arg(256)->Arg(1000)->Arg(4000);
BENCHMARK(BM_ForwardBlocked)->Arg(256)->Arg(1000)->Arg(4000);
BENCHMARK(BM_BackwardReference)->Arg(256)->Arg(1000)->Arg(4000);
BENCHMARK(BM_BackwardBlocked)->Arg(256)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
