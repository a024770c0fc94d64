#pragma once

// Checkpoint container and binary file format. A checkpoint is an ordered
// list of named f32 tensors; the file layout is
//
//   "DSEP" | u32 version | u64 count | count x entry
//   entry: u32 name_len | name bytes | u32 rank | u64 dims[rank] | f32 data
//
// all little-endian. Entry order is preserved on read, so save -> load ->
// save reproduces the file byte for byte.
//
// Training state maps onto entries as
//   param/<name>      tensor value          flag/<name>   trainable (0/1)
//   adam/<name>/m|v   moment tensors        adam/<name>/t step count
//   meta/*            plan position, loss weights, seed (four u16 limbs)
//   cfg/<key>         numeric run config echoed for inference-time rebuild

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "voxsep/core/tensor.h"
#include "voxsep/losses/losses.h"
#include "voxsep/nets/nets.h"
#include "voxsep/train/adam.h"

namespace voxsep::train {

struct CheckpointData {
  std::vector<std::pair<std::string, Tensor<float>>> entries;

  void add(std::string name, Tensor<float> t);
  void add_scalar(std::string name, double v);  // small ints/flags, exact below 2^24
  // Exact 64-bit payloads (doubles, seeds) as four 16-bit limbs, low first:
  // each limb is exactly representable in f32.
  void add_bits64(std::string name, std::uint64_t bits);
  void add_double(std::string name, double v);
  const Tensor<float>* find(const std::string& name) const;  // nullptr when missing
  double scalar(const std::string& name) const;              // throws when missing
  std::uint64_t bits64(const std::string& name) const;
  double get_double(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }
};

void write_checkpoint_file(const std::string& path, const CheckpointData& ckpt);
CheckpointData read_checkpoint_file(const std::string& path);

struct TrainMeta {
  std::int64_t phase_index = 0;
  std::int64_t epoch = 0;  // global epochs completed
  losses::LossWeights weights;
  std::uint64_t seed = 0;
  std::map<std::string, double> config;  // serialized under cfg/<key>
};

// Packs params (+ trainable flags), optimizer slots in store order, and meta
// into one deterministic entry list.
CheckpointData assemble_checkpoint(const nets::ParamStore& store, const Adam& adam,
                                   const TrainMeta& meta);

// Inverse of assemble_checkpoint against an already-built store with the same
// param names. Unknown param names and shape mismatches throw.
void restore_checkpoint(const CheckpointData& ckpt, nets::ParamStore& store, Adam& adam,
                        TrainMeta* meta);

// The cfg/* entries alone, for rebuilding a pipeline before any store exists.
std::map<std::string, double> read_config_map(const CheckpointData& ckpt);

}  // namespace voxsep::train
