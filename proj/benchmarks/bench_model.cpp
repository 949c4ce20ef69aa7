#include <benchmark/benchmark.h>

#include <numeric>

#include "interformer/metrics.hpp"
#include "interformer/model.hpp"
#include "interformer/synthetic.hpp"

using namespace interformer;

namespace {

struct Setup {
  Dataset data;
  RawBatch raw;
};

const Setup& setup() {
  static const Setup s = [] {
    SyntheticConfig sc;
    sc.examples = 512;
    Setup out{generate_synthetic(sc, 1), {}};
    std::vector<std::size_t> idx(256);
    std::iota(idx.begin(), idx.end(), 0);
    out.raw = make_batch(out.data, idx);
    return out;
  }();
  return s;
}

// One training step's worth of compute (forward + backward) on a batch of 256.
void BM_ForwardBackward(benchmark::State& state) {
  ModelConfig c;
  c.mode = kAllModes[state.range(0)];
  c.layers = static_cast<std::size_t>(state.range(1));
  const Setup& s = setup();
  const Model m = init_model(c, s.data.schema, 0);
  for (auto _ : state) {
    Graph g;
    ParamBinding p(g, m.params);
    g.backward(cross_entropy(interformer_forward(c, s.data.schema, s.raw, p).probs, s.raw.labels));
    benchmark::DoNotOptimize(p.gradients());
  }
  state.SetLabel(std::string(mode_name(c.mode)));
  state.SetItemsProcessed(state.iterations() * 256);
}

BENCHMARK(BM_ForwardBackward)
    ->ArgsProduct({{0, 1, 2, 3, 4}, {2}})
    ->Args({4, 1})
    ->Args({4, 4})
    ->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  ModelConfig c;
  const Setup& s = setup();
  const Model m = init_model(c, s.data.schema, 0);
  for (auto _ : state) {
    Graph g;
    ParamBinding p(g, m.params, false);
    benchmark::DoNotOptimize(interformer_forward(c, s.data.schema, s.raw, p).probs.value());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

}  // namespace
