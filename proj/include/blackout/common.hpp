#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace blackout {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Malformed input files (CSV panels, JSON documents, configs).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated preconditions on arguments or dimension mismatches.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown inside filtering, smoothing or the M-step.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

/// Derives an independent 64-bit seed for a named random substream.
/// FNV-1a over the name, mixed with the base seed through splitmix64.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : stream) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = base ^ h;
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index)
{
    return derive_seed(derive_seed(base, stream), std::to_string(index));
}

}  // namespace blackout
