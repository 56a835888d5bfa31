#include "rai/random.hpp"

#include "rai/error.hpp"

#include <cmath>

namespace rai {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ rotl(b, 23) ^ 0x2545f4914f6cdd1dULL;
    std::uint64_t h = splitmix64(x);
    x ^= b;
    return h ^ splitmix64(x);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
    std::uint64_t x = mix64(seed, stream_id);
    for (auto& s : state_) s = splitmix64(x);
}

SeededRng SeededRng::substream(std::uint64_t tag) const {
    return SeededRng(mix64(seed_, stream_id_), tag);
}

std::uint64_t SeededRng::next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double SeededRng::uniform() {
    // 53 random bits shifted by half an ulp keep the result away from 0 and 1.
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
    if (n == 0) throw ParameterError("uniform_index: n must be positive");
    // Lemire's nearly-divisionless rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double SeededRng::normal() {
    // Marsaglia polar method; the spare value is discarded so that the
    // sequence depends only on the number of calls.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
}

double SeededRng::exponential() { return -std::log(uniform()); }

double SeededRng::log_gamma_variate(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw ParameterError("gamma: shape must be positive and finite");
    if (shape == 1.0) return std::log(exponential());
    if (shape < 1.0) {
        // G(a) = G(a + 1) * U^(1/a), kept in log space.
        return log_gamma_variate(shape + 1.0) + std::log(uniform()) / shape;
    }
    // Marsaglia and Tsang.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
    }
}

double SeededRng::gamma(double shape) { return std::exp(log_gamma_variate(shape)); }

Eigen::Index SeededRng::categorical(const Eigen::Ref<const Eigen::VectorXd>& probs) {
    const double total = probs.sum();
    if (!(total > 0.0)) throw ParameterError("categorical: weights must have positive sum");
    const double target = uniform() * total;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (target < acc) return i;
    }
    // Rounding left target at the very top; return the last positive entry.
    for (Eigen::Index i = probs.size() - 1; i >= 0; --i)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

}  // namespace rai
