#pragma once

#include <string>

namespace llr {

/// Shortest-form-independent rendering with 17 significant digits; "inf",
/// "-inf" and "nan" for non-finite values.
std::string format_double(double v);

} // namespace llr
