#pragma once

// Zipf-distributed ranks in [1, n] by inverse-CDF lookup. The table is built
// once and can be shared read-only between threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace mv {

class ZipfGenerator {
public:
    ZipfGenerator(double theta, uint64_t n) : cdf_(n) {
        if (!(theta > 0) || n == 0) throw std::invalid_argument("zipf needs theta > 0 and n > 0");
        double sum = 0;
        for (uint64_t i = 0; i < n; ++i) {
            sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
            cdf_[i] = sum;
        }
        for (double& c : cdf_) c /= sum;
        cdf_.back() = 1.0;
    }

    template <class Rng>
    uint64_t operator()(Rng& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return static_cast<uint64_t>(std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin()) + 1;
    }

    uint64_t n() const { return cdf_.size(); }

private:
    std::vector<double> cdf_;
};

}  // namespace mv
