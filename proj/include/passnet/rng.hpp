#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace passnet {

// Counter-based generator (Philox4x32-10). A (seed, stream) pair names an
// independent stream; draws depend only on (seed, stream, position), so
// parallel consumers can derive per-chain / per-match streams and reproduce
// them bit-for-bit on any platform.
class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    // Independent substream of the same seed.
    Philox derive(std::uint64_t substream) const {
        Philox g(static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32),
                 stream_ ^ (0x9E3779B97F4A7C15ull * (substream + 1)));
        return g;
    }

    std::uint64_t next_u64() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        std::array<std::uint32_t, 4> out = block(counter_++);
        spare_ = static_cast<std::uint64_t>(out[2]) | (static_cast<std::uint64_t>(out[3]) << 32);
        have_spare_ = true;
        return static_cast<std::uint64_t>(out[0]) | (static_cast<std::uint64_t>(out[1]) << 32);
    }

    // Uniform on (0,1), 53-bit resolution, never exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Inverse-CDF exponential: h = -log1p(-u)/lambda.
    double exponential(double lambda) {
        if (!(lambda > 0.0)) throw std::invalid_argument("exponential: lambda must be > 0");
        return -std::log1p(-uniform()) / lambda;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Inverse-CDF standard normal (Wichura's AS241, double precision).
    double normal() { return normal_quantile(uniform()); }

    // CDF scan over nonnegative weights (need not be normalized).
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical: total weight must be > 0");
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            acc += weights[k];
            if (u < acc) return static_cast<int>(k);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be > 0");
        return static_cast<int>(uniform() * n) % n;
    }

    static double normal_quantile(double p);

private:
    std::array<std::uint32_t, 4> block(std::uint64_t ctr) const {
        std::array<std::uint32_t, 4> x{static_cast<std::uint32_t>(ctr),
                                       static_cast<std::uint32_t>(ctr >> 32),
                                       static_cast<std::uint32_t>(stream_),
                                       static_cast<std::uint32_t>(stream_ >> 32)};
        std::uint32_t k0 = key_[0], k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = 0xD2511F53ull * x[0];
            const std::uint64_t p1 = 0xCD9E8D57ull * x[2];
            x = {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k0,
                 static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k1,
                 static_cast<std::uint32_t>(p0)};
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return x;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
    std::uint64_t spare_ = 0;
    bool have_spare_ = false;
};

}  // namespace passnet
