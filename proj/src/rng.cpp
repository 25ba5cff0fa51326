#include "opts/rng.hpp"

#include <sstream>

#include "opts/errors.hpp"

namespace opts {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

std::string save_rng(const Rng& rng) {
    std::ostringstream out;
    out << rng;
    return out.str();
}

Rng restore_rng(const std::string& state) {
    Rng rng;
    std::istringstream in(state);
    in >> rng;
    if (in.fail()) {
        throw CorruptCheckpoint("malformed RNG state");
    }
    in >> std::ws;
    if (!in.eof()) {
        throw CorruptCheckpoint("trailing data after RNG state");
    }
    return rng;
}

double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Beta(a, b) as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b).
double sample_beta(Rng& rng, double alpha, double beta) {
    const double x = std::gamma_distribution<double>(alpha, 1.0)(rng);
    const double y = std::gamma_distribution<double>(beta, 1.0)(rng);
    if (x + y == 0.0) {
        return alpha >= beta ? 1.0 : 0.0;
    }
    return x / (x + y);
}

RngStreams RngStreams::from_seed(std::uint64_t seed) {
    return RngStreams{make_stream(seed, 1), make_stream(seed, 2), make_stream(seed, 3)};
}

}  // namespace opts
