// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink

#pragma once

namespace ciforge {

inline constexpr const char* kVersion = "0.1.0";

} // namespace ciforge
