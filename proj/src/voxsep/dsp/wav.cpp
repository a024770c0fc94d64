#include "voxsep/dsp/wav.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "voxsep/common.h"

namespace voxsep::dsp {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ofstream& f, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

void write_header(std::ofstream& f, int sample_rate, std::uint16_t fmt, std::uint16_t bits,
                  std::uint32_t data_bytes, std::int64_t n) {
  const std::uint16_t block = static_cast<std::uint16_t>(bits / 8);
  const bool with_fact = fmt == 3;
  const std::uint32_t riff = 4 + (8 + 16) + (with_fact ? 8 + 4 : 0) + 8 + data_bytes;
  f.write("RIFF", 4);
  wr_u32(f, riff);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  wr_u32(f, 16);
  wr_u16(f, fmt);
  wr_u16(f, 1);  // mono
  wr_u32(f, static_cast<std::uint32_t>(sample_rate));
  wr_u32(f, static_cast<std::uint32_t>(sample_rate) * block);
  wr_u16(f, block);
  wr_u16(f, bits);
  if (with_fact) {
    f.write("fact", 4);
    wr_u32(f, 4);
    wr_u32(f, static_cast<std::uint32_t>(n));
  }
  f.write("data", 4);
  wr_u32(f, data_bytes);
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  VX_CHECK(f.good(), "cannot open wav file: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  VX_CHECK(raw.size() >= 44, "wav too short: " + path);
  VX_CHECK(std::memcmp(raw.data(), "RIFF", 4) == 0 && std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
           "not a RIFF/WAVE file: " + path);

  std::uint16_t fmt = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_bytes = 0;
  std::size_t off = 12;
  while (off + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + off);
    const std::uint32_t sz = rd_u32(raw.data() + off + 4);
    const std::size_t body = off + 8;
    VX_CHECK(body + sz <= raw.size(), "truncated wav chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      VX_CHECK(sz >= 16, "malformed fmt chunk in " + path);
      fmt = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      rate = rd_u32(raw.data() + body + 4);
      bits = rd_u16(raw.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = raw.data() + body;
      data_bytes = sz;
    }
    off = body + sz + (sz & 1);  // chunks are word aligned
  }
  VX_CHECK(fmt != 0 && data != nullptr, "wav missing fmt or data chunk: " + path);
  VX_CHECK(channels == 1, "wav must be mono: " + path);
  VX_CHECK(rate == 16000 || rate == 22050, "wav sample rate must be 16000 or 22050: " + path);
  const bool pcm16 = fmt == 1 && bits == 16;
  const bool f32 = fmt == 3 && bits == 32;
  VX_CHECK(pcm16 || f32, "wav must be 16-bit PCM or 32-bit float: " + path);

  WavData out;
  out.sample_rate = static_cast<int>(rate);
  if (pcm16) {
    VX_CHECK(data_bytes % 2 == 0, "odd pcm16 data size: " + path);
    const std::int64_t n = data_bytes / 2;
    out.samples = Tensor<float>({n});
    for (std::int64_t i = 0; i < n; ++i) {
      const std::uint16_t u = rd_u16(data + 2 * i);
      out.samples[i] = static_cast<float>(static_cast<std::int16_t>(u)) / 32768.0f;
    }
  } else {
    VX_CHECK(data_bytes % 4 == 0, "odd float32 data size: " + path);
    const std::int64_t n = data_bytes / 4;
    out.samples = Tensor<float>({n});
    for (std::int64_t i = 0; i < n; ++i) {
      std::uint32_t u = rd_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      out.samples[i] = v;
    }
  }
  return out;
}

void write_wav_float32(const std::string& path, const float* x, std::int64_t n, int sample_rate) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  VX_CHECK(f.good(), "cannot write wav file: " + path);
  write_header(f, sample_rate, 3, 32, static_cast<std::uint32_t>(n * 4), n);
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint32_t u;
    std::memcpy(&u, &x[i], 4);
    wr_u32(f, u);
  }
  VX_CHECK(f.good(), "short write to wav file: " + path);
}

void write_wav_pcm16(const std::string& path, const float* x, std::int64_t n, int sample_rate) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  VX_CHECK(f.good(), "cannot write wav file: " + path);
  write_header(f, sample_rate, 1, 16, static_cast<std::uint32_t>(n * 2), n);
  for (std::int64_t i = 0; i < n; ++i) {
    // inverse of the x/32768 decode, clamped at the asymmetric int16 edge
    const double v = std::lrint(static_cast<double>(x[i]) * 32768.0);
    const std::int16_t s = static_cast<std::int16_t>(std::min(32767.0, std::max(-32768.0, v)));
    wr_u16(f, static_cast<std::uint16_t>(s));
  }
  VX_CHECK(f.good(), "short write to wav file: " + path);
}

}  // namespace voxsep::dsp
