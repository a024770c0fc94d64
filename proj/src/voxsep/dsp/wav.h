#pragma once

// Mono WAV I/O. Accepted on read: 16-bit PCM or 32-bit IEEE float,
// single channel, 16000 or 22050 Hz. Anything else is rejected loudly;
// silent format coercion would corrupt downstream math.

#include <cstdint>
#include <string>

#include "voxsep/core/tensor.h"

namespace voxsep::dsp {

struct WavData {
  int sample_rate = 0;
  Tensor<float> samples;  // [n], PCM scaled to [-1, 1)
};

WavData read_wav(const std::string& path);

void write_wav_float32(const std::string& path, const float* x, std::int64_t n, int sample_rate);
void write_wav_pcm16(const std::string& path, const float* x, std::int64_t n, int sample_rate);

}  // namespace voxsep::dsp
