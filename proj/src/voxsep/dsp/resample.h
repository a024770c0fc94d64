#pragma once

// Windowed-sinc sample-rate conversion (double internally). Each output
// sample normalizes by its own kernel sum, so DC is preserved exactly.

#include <cstdint>
#include <vector>

namespace voxsep::dsp {

std::vector<float> resample(const float* x, std::int64_t n, int sr_in, int sr_out, int taps = 32);

}  // namespace voxsep::dsp
