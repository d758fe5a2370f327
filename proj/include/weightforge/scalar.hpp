// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace wforge {

#if defined(WEIGHTFORGE_USE_DOUBLE)
using Scalar = double;
#else
using Scalar = float;
#endif

}  // namespace wforge
