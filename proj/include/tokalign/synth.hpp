#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokalign/matrix.hpp"

namespace tokalign {

// Synthetic alignment corpus: each token type maps to a fixed spectral
// pattern of 8-24 frames; utterances concatenate 2-6 distinct types with
// additive Gaussian noise. Teacher rows are orthonormalized per-type vectors
// plus a small positional perturbation, so retrieval and diagonality have
// known targets.
struct SynthConfig {
    int n_utterances = 200;
    uint64_t seed = 7;
    int n_types = 24;         // content token types (n_types + 2 <= d)
    int n_mels = 16;
    int d = 64;
    int min_tokens = 2;
    int max_tokens = 6;
    int min_frames = 8;
    int max_frames = 24;
    double noise_sigma = 0.1;
    double pos_perturb = 0.1;
    int n_classes = 4;        // intent = first token's type modulo n_classes
    double dev_fraction = 0.2;
};

// Emits features/, teacher/, vocab.txt, manifest.jsonl, spans.jsonl under
// out_dir. Byte-deterministic for a given config.
void generate_synth_dataset(const std::string& out_dir, const SynthConfig& cfg);

// spans.jsonl: per utterance, [query_row, expected_key] pairs for content
// tokens (CLS/SEP excluded).
using SpanList = std::vector<std::pair<int, int>>;
std::vector<std::pair<std::string, SpanList>> load_spans(const std::string& path);

}  // namespace tokalign
