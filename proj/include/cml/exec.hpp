#pragma once

namespace cml {

// Kernel execution policy. Both policies produce bit-identical results; the
// serial path is the reference the OpenMP path is tested against.
enum class Exec { kSerial, kParallel };

}  // namespace cml
