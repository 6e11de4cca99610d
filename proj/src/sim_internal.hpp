#ifndef MQTTG_SIM_INTERNAL_HPP
#define MQTTG_SIM_INTERNAL_HPP

#include <cstdint>
#include <vector>

#include "mqttg/sim.hpp"

namespace mqttg::sim {

// Engine-independent deterministic RNG so identical seeds give identical runs
// on any platform.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline double uniform01(uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

inline uint64_t client_rng_state(uint64_t seed, std::size_t client_index) {
    uint64_t s = seed ^ (0xC11E57ULL + static_cast<uint64_t>(client_index) * 0x9E3779B97F4A7C15ULL);
    splitmix64(s);
    return s;
}

// The simulated event order both the runner and the oracle walk. Ties at one
// timestamp resolve by seq: setups, then pings, then publishes, each in
// scenario client order.
struct SimEvent {
    enum class Kind { Setup, Ping, Publish };
    double time = 0.0;
    uint64_t seq = 0;
    Kind kind = Kind::Setup;
    std::size_t client = 0;
    std::size_t publish_index = 0;
};

std::vector<SimEvent> build_schedule(const Scenario& s);

}  // namespace mqttg::sim

#endif
