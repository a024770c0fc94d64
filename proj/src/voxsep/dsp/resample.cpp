#include "voxsep/dsp/resample.h"

#include <cmath>

#include "voxsep/common.h"

namespace voxsep::dsp {

namespace {

double sinc(double u) {
  if (u == 0.0) return 1.0;
  const double pu = 3.14159265358979323846 * u;
  return std::sin(pu) / pu;
}

}  // namespace

std::vector<float> resample(const float* x, std::int64_t n, int sr_in, int sr_out, int taps) {
  VX_CHECK(n > 0 && sr_in > 0 && sr_out > 0 && taps > 0, "resample: bad arguments");
  if (sr_in == sr_out) return std::vector<float>(x, x + n);
  // cutoff tracks the lower Nyquist; for upsampling scale == 1
  const double scale = std::min(1.0, static_cast<double>(sr_out) / sr_in);
  const double width = taps / scale;
  const std::int64_t out_n = std::llround(static_cast<double>(n) * sr_out / sr_in);
  std::vector<float> out(static_cast<std::size_t>(out_n));
  for (std::int64_t m = 0; m < out_n; ++m) {
    const double t1 = static_cast<double>(m) * sr_in / sr_out;  // source-time position
    const std::int64_t s0 = static_cast<std::int64_t>(std::ceil(t1 - width));
    const std::int64_t s1 = static_cast<std::int64_t>(std::floor(t1 + width));
    double acc = 0.0, wsum = 0.0;
    for (std::int64_t s = s0; s <= s1; ++s) {
      const double u = static_cast<double>(s) - t1;
      const double taper = 0.5 * (1.0 + std::cos(3.14159265358979323846 * u / width));
      const double h = scale * sinc(scale * u) * taper;
      wsum += h;
      if (s >= 0 && s < n) acc += h * static_cast<double>(x[s]);
    }
    out[static_cast<std::size_t>(m)] = static_cast<float>(wsum != 0.0 ? acc / wsum : 0.0);
  }
  return out;
}

}  // namespace voxsep::dsp
