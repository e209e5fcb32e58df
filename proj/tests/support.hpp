#pragma once

#include <cstdint>
#include <functional>

#include "vsrl/geometry.hpp"

namespace vsrl::testing {

/// Runs `body` on `cases` independently seeded generators.
inline void for_all(int cases, std::uint64_t seed, const std::function<void(Rng&, int)>& body) {
    Rng root(seed);
    for (int i = 0; i < cases; ++i) {
        Rng rng = root.fork(static_cast<std::uint64_t>(i));
        body(rng, i);
    }
}

}  // namespace vsrl::testing
