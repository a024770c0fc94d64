#include "voxsep/train/checkpoint.h"

#include <cstdio>
#include <cstring>
#include <memory>

#include "voxsep/common.h"

namespace voxsep::train {
namespace {

constexpr char kMagic[4] = {'D', 'S', 'E', 'P'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_raw(std::FILE* f, const void* p, std::size_t n) {
  VX_CHECK(std::fwrite(p, 1, n, f) == n, "checkpoint: short write");
}

void read_raw(std::FILE* f, void* p, std::size_t n) {
  VX_CHECK(std::fread(p, 1, n, f) == n, "checkpoint: truncated file");
}

template <typename T>
void write_pod(std::FILE* f, T v) {
  write_raw(f, &v, sizeof(T));
}

template <typename T>
T read_pod(std::FILE* f) {
  T v;
  read_raw(f, &v, sizeof(T));
  return v;
}

}  // namespace

void CheckpointData::add(std::string name, Tensor<float> t) {
  VX_CHECK(find(name) == nullptr, "checkpoint: duplicate entry " + name);
  entries.emplace_back(std::move(name), std::move(t));
}

void CheckpointData::add_scalar(std::string name, double v) {
  Tensor<float> t({1});
  t.data()[0] = static_cast<float>(v);
  add(std::move(name), std::move(t));
}

void CheckpointData::add_bits64(std::string name, std::uint64_t bits) {
  Tensor<float> t({4});
  for (int i = 0; i < 4; ++i) t.data()[i] = static_cast<float>((bits >> (16 * i)) & 0xffffu);
  add(std::move(name), std::move(t));
}

void CheckpointData::add_double(std::string name, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  add_bits64(std::move(name), bits);
}

std::uint64_t CheckpointData::bits64(const std::string& name) const {
  const Tensor<float>* t = find(name);
  VX_CHECK(t != nullptr, "checkpoint: missing entry " + name);
  VX_CHECK(t->numel() == 4, "checkpoint: entry " + name + " is not a 64-bit payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t->data()[i])) << (16 * i);
  }
  return bits;
}

double CheckpointData::get_double(const std::string& name) const {
  std::uint64_t bits = bits64(name);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

const Tensor<float>* CheckpointData::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.first == name) return &e.second;
  }
  return nullptr;
}

double CheckpointData::scalar(const std::string& name) const {
  const Tensor<float>* t = find(name);
  VX_CHECK(t != nullptr, "checkpoint: missing entry " + name);
  VX_CHECK(t->numel() == 1, "checkpoint: entry " + name + " is not a scalar");
  return static_cast<double>(t->data()[0]);
}

void write_checkpoint_file(const std::string& path, const CheckpointData& ckpt) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  VX_CHECK(f != nullptr, "checkpoint: cannot open for write: " + path);
  write_raw(f.get(), kMagic, 4);
  write_pod<std::uint32_t>(f.get(), kVersion);
  write_pod<std::uint64_t>(f.get(), ckpt.entries.size());
  for (const auto& [name, t] : ckpt.entries) {
    write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(name.size()));
    write_raw(f.get(), name.data(), name.size());
    const auto& shape = t.shape();
    write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(shape.size()));
    for (std::int64_t d : shape) write_pod<std::uint64_t>(f.get(), static_cast<std::uint64_t>(d));
    write_raw(f.get(), t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
  }
  VX_CHECK(std::fflush(f.get()) == 0, "checkpoint: flush failed for " + path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  VX_CHECK(f != nullptr, "checkpoint: cannot open for read: " + path);
  char magic[4];
  read_raw(f.get(), magic, 4);
  VX_CHECK(std::memcmp(magic, kMagic, 4) == 0, "checkpoint: bad magic in " + path);
  std::uint32_t version = read_pod<std::uint32_t>(f.get());
  VX_CHECK(version == kVersion, "checkpoint: unsupported version in " + path);
  std::uint64_t count = read_pod<std::uint64_t>(f.get());
  CheckpointData ckpt;
  ckpt.entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_pod<std::uint32_t>(f.get());
    VX_CHECK(name_len > 0 && name_len < 4096, "checkpoint: implausible name length");
    std::string name(name_len, '\0');
    read_raw(f.get(), name.data(), name_len);
    std::uint32_t rank = read_pod<std::uint32_t>(f.get());
    VX_CHECK(rank <= 8, "checkpoint: implausible tensor rank");
    std::vector<std::int64_t> shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      std::uint64_t d = read_pod<std::uint64_t>(f.get());
      VX_CHECK(d > 0 && d < (1ull << 32), "checkpoint: implausible dimension");
      shape[r] = static_cast<std::int64_t>(d);
      numel *= shape[r];
    }
    Tensor<float> t(shape);
    read_raw(f.get(), t.data(), static_cast<std::size_t>(numel) * sizeof(float));
    ckpt.entries.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

CheckpointData assemble_checkpoint(const nets::ParamStore& store, const Adam& adam,
                                   const TrainMeta& meta) {
  CheckpointData ckpt;
  for (const auto& e : store.entries()) {
    ckpt.add("param/" + e.name, e.value);
    ckpt.add_scalar("flag/" + e.name, e.trainable ? 1.0 : 0.0);
  }
  for (const auto& e : store.entries()) {
    auto it = adam.slots().find(e.name);
    if (it == adam.slots().end()) continue;
    ckpt.add("adam/" + e.name + "/m", it->second.m);
    ckpt.add("adam/" + e.name + "/v", it->second.v);
    ckpt.add_scalar("adam/" + e.name + "/t", static_cast<double>(it->second.t));
  }
  ckpt.add_scalar("meta/phase_index", static_cast<double>(meta.phase_index));
  ckpt.add_scalar("meta/epoch", static_cast<double>(meta.epoch));
  ckpt.add_double("meta/alpha", meta.weights.alpha);
  ckpt.add_double("meta/beta", meta.weights.beta);
  ckpt.add_double("meta/gamma", meta.weights.gamma);
  ckpt.add_bits64("meta/seed", meta.seed);
  for (const auto& [key, val] : meta.config) ckpt.add_double("cfg/" + key, val);
  return ckpt;
}

void restore_checkpoint(const CheckpointData& ckpt, nets::ParamStore& store, Adam& adam,
                        TrainMeta* meta) {
  for (auto& e : store.entries()) {
    const Tensor<float>* v = ckpt.find("param/" + e.name);
    VX_CHECK(v != nullptr, "checkpoint: missing param " + e.name);
    VX_CHECK(v->shape() == e.value.shape(), "checkpoint: shape mismatch for " + e.name);
    e.value = *v;
    e.trainable = ckpt.scalar("flag/" + e.name) != 0.0;
  }
  adam.slots().clear();
  for (const auto& e : store.entries()) {
    const Tensor<float>* m = ckpt.find("adam/" + e.name + "/m");
    if (m == nullptr) continue;
    const Tensor<float>* v = ckpt.find("adam/" + e.name + "/v");
    VX_CHECK(v != nullptr, "checkpoint: moment pair incomplete for " + e.name);
    VX_CHECK(m->shape() == e.value.shape() && v->shape() == e.value.shape(),
             "checkpoint: moment shape mismatch for " + e.name);
    AdamSlot slot;
    slot.m = *m;
    slot.v = *v;
    slot.t = static_cast<std::int64_t>(ckpt.scalar("adam/" + e.name + "/t"));
    adam.slots().emplace(e.name, std::move(slot));
  }
  if (meta != nullptr) {
    meta->phase_index = static_cast<std::int64_t>(ckpt.scalar("meta/phase_index"));
    meta->epoch = static_cast<std::int64_t>(ckpt.scalar("meta/epoch"));
    meta->weights.alpha = ckpt.get_double("meta/alpha");
    meta->weights.beta = ckpt.get_double("meta/beta");
    meta->weights.gamma = ckpt.get_double("meta/gamma");
    meta->seed = ckpt.bits64("meta/seed");
    meta->config.clear();
    for (const auto& e : ckpt.entries) {
      if (e.first.rfind("cfg/", 0) == 0) meta->config[e.first.substr(4)] = ckpt.get_double(e.first);
    }
  }
}

std::map<std::string, double> read_config_map(const CheckpointData& ckpt) {
  std::map<std::string, double> m;
  for (const auto& e : ckpt.entries) {
    if (e.first.rfind("cfg/", 0) == 0) m[e.first.substr(4)] = ckpt.get_double(e.first);
  }
  return m;
}

}  // namespace voxsep::train
