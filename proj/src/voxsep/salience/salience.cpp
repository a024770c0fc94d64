#include "voxsep/salience/salience.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "voxsep/common.h"
#include "voxsep/core/ops.h"

namespace voxsep::salience {

double FreqGrid::freq(int m) const {
  return fmin * std::pow(2.0, static_cast<double>(m) / bins_per_octave);
}

int FreqGrid::nearest_bin(double f) const {
  VX_CHECK(f > 0.0, "nearest_bin: frequency must be positive");
  const double m = bins_per_octave * std::log2(f / fmin);
  const long r = std::lround(m);
  if (r < 0) return 0;
  if (r >= n_bins) return n_bins - 1;
  return static_cast<int>(r);
}

template <typename T>
Tensor<T> FreqGrid::freq_vector() const {
  Tensor<T> v({n_bins});
  for (int m = 0; m < n_bins; ++m) v[m] = static_cast<T>(freq(m));
  return v;
}

template <typename T>
Tensor<T> binarize(const Tensor<T>& s, T threshold) {
  VX_CHECK(s.rank() == 2, "binarize: need [L, M]");
  const std::int64_t L = s.dim(0), M = s.dim(1);
  Tensor<T> out({L, M});
  for (std::int64_t l = 0; l < L; ++l) {
    const T* row = s.data() + l * M;
    std::int64_t best = 0;
    for (std::int64_t m = 1; m < M; ++m)
      if (row[m] > row[best]) best = m;  // strict: ties keep the lower bin
    if (row[best] >= threshold) out.data()[l * M + best] = T(1);
  }
  return out;
}

template <typename T>
Tensor<T> range_mask(const FreqGrid& g, double lo_hz, double hi_hz) {
  VX_CHECK(lo_hz > 0.0 && lo_hz <= hi_hz, "range_mask: bad interval");
  Tensor<T> mask({g.n_bins});
  for (int m = 0; m < g.n_bins; ++m) {
    const double f = g.freq(m);
    if (f >= lo_hz && f <= hi_hz) mask[m] = T(1);
  }
  return mask;
}

template <typename T>
F0Extraction<T> extract_f0(autodiff::Value<T> s, const FreqGrid& g, T threshold) {
  VX_CHECK(s.data().rank() == 2 && s.data().dim(1) == g.n_bins, "extract_f0: need [L, n_bins]");
  F0Extraction<T> r;
  r.binary = binarize(s.data(), threshold);
  autodiff::Value<T> hard = ops::straight_through(s, r.binary);
  r.f0 = ops::rows_dot(hard, g.freq_vector<T>());
  return r;
}

void write_salience_dump(const std::string& path, const std::vector<Tensor<float>>& maps) {
  VX_CHECK(!maps.empty(), "salience dump: no maps");
  const std::int64_t L = maps[0].dim(0), M = maps[0].dim(1);
  for (const auto& m : maps) VX_CHECK(m.rank() == 2 && m.dim(0) == L && m.dim(1) == M, "salience dump: inconsistent map shapes");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  VX_CHECK(f.good(), "cannot write salience dump: " + path);
  f.write("SALI", 4);
  const std::uint32_t hdr[3] = {static_cast<std::uint32_t>(maps.size()),
                                static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(M)};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (const auto& m : maps)
    f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.numel() * 4));
  VX_CHECK(f.good(), "short write to salience dump: " + path);
}

std::vector<Tensor<float>> read_salience_dump(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  VX_CHECK(f.good(), "cannot open salience dump: " + path);
  char magic[4];
  f.read(magic, 4);
  VX_CHECK(f.good() && std::memcmp(magic, "SALI", 4) == 0, "not a salience dump: " + path);
  std::uint32_t hdr[3];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  VX_CHECK(f.good(), "truncated salience dump header: " + path);
  std::vector<Tensor<float>> maps;
  for (std::uint32_t j = 0; j < hdr[0]; ++j) {
    Tensor<float> m({static_cast<std::int64_t>(hdr[1]), static_cast<std::int64_t>(hdr[2])});
    f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.numel() * 4));
    VX_CHECK(f.good(), "truncated salience dump payload: " + path);
    maps.push_back(std::move(m));
  }
  return maps;
}

template Tensor<float> FreqGrid::freq_vector<float>() const;
template Tensor<double> FreqGrid::freq_vector<double>() const;
template Tensor<float> binarize<float>(const Tensor<float>&, float);
template Tensor<double> binarize<double>(const Tensor<double>&, double);
template Tensor<float> range_mask<float>(const FreqGrid&, double, double);
template Tensor<double> range_mask<double>(const FreqGrid&, double, double);
template F0Extraction<float> extract_f0<float>(autodiff::Value<float>, const FreqGrid&, float);
template F0Extraction<double> extract_f0<double>(autodiff::Value<double>, const FreqGrid&, double);

}  // namespace voxsep::salience
