#include "openset/numeric.hpp"

#include <cmath>
#include <string>

#include "openset/error.hpp"

namespace openset {

bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::dimension_mismatch,
                    std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                        " vs " + std::to_string(b) + ")");
    }
}

double pnorm_distance(std::span<const double> x, std::span<const double> y, double p) {
    require_same_dim(x.size(), y.size(), "pnorm_distance");
    if (!(p >= 1.0) || !std::isfinite(p)) {
        throw Error(ErrorCode::invalid_argument,
                    "pnorm_distance: p must be a finite value >= 1, got " + std::to_string(p));
    }
    double sum = 0.0;
    if (p == 1.0) {
        for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(x[i] - y[i]);
        return sum;
    }
    if (p == 2.0) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - y[i];
            sum += d * d;
        }
        return std::sqrt(sum);
    }
    for (std::size_t i = 0; i < x.size(); ++i) sum += std::pow(std::abs(x[i] - y[i]), p);
    return std::pow(sum, 1.0 / p);
}

Matrix pairwise_distances(std::span<const Vector> queries, std::span<const Vector> refs,
                          double p) {
    if (refs.empty()) {
        throw Error(ErrorCode::invalid_argument, "pairwise_distances: empty reference set");
    }
    Matrix out(queries.size(), refs.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        for (std::size_t j = 0; j < refs.size(); ++j) {
            out(i, j) = pnorm_distance(queries[i], refs[j], p);
        }
    }
    return out;
}

std::size_t Rng::index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

double Rng::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
}

double Rng::normal() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
}

} // namespace openset
