// Micro-benchmarks for the hot paths: program parsing, batch inference,
// rationale rendering, one training epoch, and the metric stack.

#include <benchmark/benchmark.h>

#include "lfm/chain.hpp"
#include "lfm/engine.hpp"
#include "lfm/evaluation.hpp"
#include "lfm/learners.hpp"
#include "lfm/narrative.hpp"
#include "lfm/presets.hpp"
#include "lfm/synthetic.hpp"

namespace {

const lfm::Preset& preset() { return lfm::diversion_preset(); }

lfm::GenResult make_data(std::size_t n) {
    lfm::GenConfig cfg;
    cfg.schema = preset().schema;
    cfg.program = preset().program;
    cfg.outcome_weights = preset().outcome_weights;
    cfg.noise_scale = preset().noise_scale;
    cfg.n = n;
    cfg.seed = 42;
    return lfm::gen_dataset(cfg);
}

void bench_parse_program(benchmark::State& state) {
    const std::string& source = preset().program_text;
    for (auto _ : state) {
        auto program = lfm::parse_chain(source);
        benchmark::DoNotOptimize(program);
    }
}
BENCHMARK(bench_parse_program);

void bench_batch_infer(benchmark::State& state) {
    auto data = make_data(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto results = lfm::batch_infer(data.dataset, preset().program);
        benchmark::DoNotOptimize(results);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_batch_infer)->Arg(100)->Arg(1000);

void bench_render_rationale(benchmark::State& state) {
    auto data = make_data(64);
    auto results = lfm::batch_infer(data.dataset, preset().program);
    std::size_t i = 0;
    for (auto _ : state) {
        auto text = lfm::render_rationale(results[i % results.size()], preset().style);
        benchmark::DoNotOptimize(text);
        ++i;
    }
}
BENCHMARK(bench_render_rationale);

void bench_train_epoch(benchmark::State& state) {
    auto data = make_data(static_cast<std::size_t>(state.range(0)));
    auto encoded = lfm::encode(data.dataset);
    lfm::TrainConfig cfg;
    cfg.max_epochs = 1;
    for (auto _ : state) {
        auto trained = lfm::train(encoded, cfg, lfm::Arch::Linear);
        benchmark::DoNotOptimize(trained);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_train_epoch)->Arg(200)->Arg(1000);

void bench_metrics(benchmark::State& state) {
    auto data = make_data(1000);
    auto encoded = lfm::encode(data.dataset);
    lfm::TrainConfig cfg;
    cfg.max_epochs = 25;
    auto [model, report] = lfm::train(encoded, cfg, lfm::Arch::Linear);
    auto probs = lfm::predict_proba_all(model, encoded);
    for (auto _ : state) {
        auto rep = lfm::metrics(probs, encoded.label_indices, encoded.class_labels);
        benchmark::DoNotOptimize(rep);
    }
}
BENCHMARK(bench_metrics);

} // namespace

BENCHMARK_MAIN();
