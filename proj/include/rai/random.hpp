#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>

namespace rai {

// Counter-free splittable generator: xoshiro256** whose state is expanded by
// splitmix64 from the (seed, stream_id) pair. Two generators built from the
// same pair produce identical sequences on every platform, which is what the
// posterior engine relies on to make draws independent of scheduling.
class SeededRng {
public:
    using result_type = std::uint64_t;

    SeededRng(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    // Independent child generator keyed by `tag`; does not advance *this.
    SeededRng substream(std::uint64_t tag) const;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next(); }
    std::uint64_t next();

    // Uniform on the open interval (0, 1).
    double uniform();
    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();
    double exponential();
    // Gamma(shape, 1). Handles shape in (0, 1) through the boost trick.
    double gamma(double shape);
    // log of a Gamma(shape, 1) variate; finite even when the variate underflows.
    double log_gamma_variate(double shape);
    // Index drawn from a (not necessarily normalized) nonnegative weight vector.
    Eigen::Index categorical(const Eigen::Ref<const Eigen::VectorXd>& probs);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::array<std::uint64_t, 4> state_{};
};

std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace rai
