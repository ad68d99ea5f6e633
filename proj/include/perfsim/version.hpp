#ifndef PERFSIM_VERSION_HPP
#define PERFSIM_VERSION_HPP

namespace perfsim {

inline constexpr const char* kVersion = "perfsim 0.1.0";

}  // namespace perfsim

#endif  // PERFSIM_VERSION_HPP
