#ifndef IPFN_RNG_HPP
#define IPFN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace ipfn {

// Seeded generator with serializable state. Uniform and normal draws are
// implemented here rather than through <random> distributions so that the
// streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller; the spare deviate is cached and is part of the state.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    // Child generator whose stream depends only on this one's next output.
    Rng split() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ULL); }

    std::string save() const {
        std::ostringstream os;
        os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
        os.precision(17);
        os << std::hexfloat << spare_;
        return os.str();
    }

    void load(const std::string& state) {
        std::istringstream is(state);
        int spare_flag = 0;
        std::string spare_text;
        is >> engine_ >> spare_flag >> spare_text;
        has_spare_ = spare_flag != 0;
        spare_ = std::strtod(spare_text.c_str(), nullptr);
    }

    bool operator==(const Rng& o) const {
        return engine_ == o.engine_ && has_spare_ == o.has_spare_ && (!has_spare_ || spare_ == o.spare_);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ipfn

#endif
