#include "dpa/errors.hpp"

namespace dpa {

void throw_invalid(const std::string& what) { throw InvalidInputError(what); }

} // namespace dpa
