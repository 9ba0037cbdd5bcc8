#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace openset {

/// Dense real vector; the unit of every distance computation.
using Vector = std::vector<double>;

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }

    bool operator==(const Matrix&) const = default;
};

bool all_finite(std::span<const double> values);

/// Throws ErrorCode::dimension_mismatch naming `what` when sizes differ.
void require_same_dim(std::size_t a, std::size_t b, const char* what);

/// (sum_i |x_i - y_i|^p)^(1/p), accumulated in ascending index order.
/// Requires p >= 1 and equal lengths.
double pnorm_distance(std::span<const double> x, std::span<const double> y, double p = 2.0);

/// Entry (i, j) is pnorm_distance(queries[i], refs[j], p).
Matrix pairwise_distances(std::span<const Vector> queries, std::span<const Vector> refs,
                          double p = 2.0);

/// Seeded generator shared by every stochastic step of the pipeline.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    double uniform(double lo, double hi);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace openset
