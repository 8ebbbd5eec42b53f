#pragma once

#include "featrestore/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace featrestore {

/// Reproducible generator. All draws are derived from the engine state only
/// (no cached normals), so serializing the engine captures the full state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Uniform in (0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    double normal();
    Vector normal_vector(Eigen::Index n);
    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);
    /// Truncated normal at +-2 std.
    double truncated_normal(double std);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string state() const;
    void set_state(const std::string& s);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Seed derived from a global seed and a string key (e.g. a sample id).
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key);
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t key);

}  // namespace featrestore
