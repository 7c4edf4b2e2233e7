#include "bmdg/rng.hpp"

#include <sstream>

#include "bmdg/errors.hpp"

namespace bmdg {

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void restore_rng_state(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
    if (!is) throw IoError("corrupt rng state");
}

}  // namespace bmdg
