#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace opts {

using Rng = std::mt19937_64;

// Independent engine for a (seed, stream) pair.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

// Full engine state as text, and back. restore throws CorruptCheckpoint on
// malformed input.
std::string save_rng(const Rng& rng);
Rng restore_rng(const std::string& state);

// Distributions are constructed per draw so that the engine state alone
// determines every future value.
double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
double sample_beta(Rng& rng, double alpha, double beta);

// The three streams a run owns.
struct RngStreams {
    Rng evolution;
    Rng selection;
    Rng split;

    static RngStreams from_seed(std::uint64_t seed);
};

}  // namespace opts
