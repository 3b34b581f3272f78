#include "deid/error.hpp"

namespace deid {

namespace {
std::string with_offset(const std::string& what, std::size_t offset) {
  if (offset == DecodeError::npos) return what;
  return what + " (at byte " + std::to_string(offset) + ")";
}
}  // namespace

DecodeError::DecodeError(const std::string& what, std::size_t offset)
    : Error(with_offset(what, offset)), offset_(offset) {}

}  // namespace deid
