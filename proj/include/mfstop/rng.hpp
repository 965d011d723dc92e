#pragma once

#include <cmath>
#include <cstdint>

namespace mfstop {

// Counter-based generator: every draw is a pure function of
// (seed, task, rep, player, step, channel), so results do not depend on the
// order in which threads consume them.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t task, std::uint64_t rep = 0)
        : key_(mix(mix(seed ^ 0x9e3779b97f4a7c15ULL) ^ mix(task + 0x632be59bd9b4e019ULL) ^
                   mix(rep * 0xd6e8feb86659fd93ULL + 1))) {}

    std::uint64_t bits(std::uint64_t player, std::uint64_t step, std::uint64_t channel = 0) const {
        std::uint64_t h = mix(key_ ^ mix(player + 0x8cb92ba72f3d8dd7ULL));
        h = mix(h ^ mix(step + 0x4f1bbcdcbfa53e0aULL));
        return mix(h ^ (channel * 0xa0761d6478bd642fULL + 0xe7037ed1a0b428dbULL));
    }

    // Uniform on the open interval (0, 1).
    double uniform(std::uint64_t player, std::uint64_t step, std::uint64_t channel = 0) const {
        return (static_cast<double>(bits(player, step, channel) >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller on two channels.
    double normal(std::uint64_t player, std::uint64_t step, std::uint64_t channel = 0) const {
        double u1 = uniform(player, step, 2 * channel);
        double u2 = uniform(player, step, 2 * channel + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_;
};

// Task identifiers for named streams.
enum StreamTask : std::uint64_t {
    kStreamSimulation = 1,
    kStreamInitial = 2,
    kStreamStopping = 3,
    kStreamFlowAtoms = 4,
    kStreamPolicySearch = 5,
    kStreamPermutation = 6,
    kStreamSubsample = 7,
    kStreamPurify = 8,
};

}  // namespace mfstop
