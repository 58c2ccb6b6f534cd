#include "avsr/error.hpp"

namespace avsr {

void throw_invalid(const std::string& what) { throw InvalidInput(what); }

}  // namespace avsr
