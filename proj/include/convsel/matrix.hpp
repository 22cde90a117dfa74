#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace convsel {

// Minimal row-major dense matrix; all models here are small enough that this is plenty.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

    bool operator==(const Matrix& other) const = default;
};

// Deterministic uniform in [0, 1). Avoids std::uniform_real_distribution so that
// streams are identical across standard library implementations.
inline double uniform_unit(std::mt19937& rng)
{
    return static_cast<double>(rng()) / 4294967296.0;
}

// Uniform integer in [0, n). Modulo bias is irrelevant at these scales.
inline std::uint32_t uniform_below(std::mt19937& rng, std::uint32_t n)
{
    return rng() % n;
}

// Box-Muller standard normal, deterministic per engine state.
inline double normal_unit(std::mt19937& rng)
{
    double u1 = 0.0;
    do {
        u1 = uniform_unit(rng);
    } while (u1 <= 0.0);
    double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace convsel
