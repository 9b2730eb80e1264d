#include "tcp/errors.hpp"

namespace tcp {

std::string shape_string(long rows, long cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

}  // namespace tcp
