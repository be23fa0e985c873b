#ifndef SWOPT_VERSION_HPP
#define SWOPT_VERSION_HPP

namespace swopt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace swopt

#endif  // SWOPT_VERSION_HPP
