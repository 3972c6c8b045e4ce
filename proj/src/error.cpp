#include "starn/error.hpp"

namespace starn {

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return 4;
    return 1;
}

}  // namespace starn
