#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "aes/rng.hpp"
#include "aes/tokenizer.hpp"

namespace {

std::vector<std::string> synthetic_corpus(std::size_t docs) {
    const char* words[] = {"the",     "student", "wrote",   "an",       "essay",
                           "about",   "science", "history", "argument", "evidence",
                           "because", "support", "clearly", "states",   "quality"};
    aes::Rng rng(9);
    std::vector<std::string> out;
    for (std::size_t d = 0; d < docs; ++d) {
        std::string doc;
        for (int w = 0; w < 60; ++w) {
            if (w) doc += ' ';
            doc += words[rng.below(std::size(words))];
        }
        out.push_back(std::move(doc));
    }
    return out;
}

void BM_TrainBpe(benchmark::State& state) {
    const auto corpus = synthetic_corpus(200);
    for (auto _ : state) {
        benchmark::DoNotOptimize(aes::train_bpe(corpus, 400, 0));
    }
}
BENCHMARK(BM_TrainBpe);

void BM_Encode(benchmark::State& state) {
    const auto corpus = synthetic_corpus(200);
    const aes::Vocabulary vocab = aes::train_bpe(corpus, 400, 0);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(aes::encode(corpus[i % corpus.size()], vocab, 512));
        ++i;
    }
}
BENCHMARK(BM_Encode);

}  // namespace
