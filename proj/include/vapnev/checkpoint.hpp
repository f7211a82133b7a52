// Copyright 2026 The vapnev Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VAPNEV_CHECKPOINT_HPP_
#define VAPNEV_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vapnev/model.hpp"
#include "vapnev/tensor.hpp"

namespace vapnev {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct NamedTensor {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<std::uint8_t> data;  // little-endian element bytes

  bool operator==(const NamedTensor&) const = default;
};

// Everything needed to resume training bit-for-bit: the canonical config
// text, the training RNG state, the step counter, parameters and ADAM moments.
struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string config;
  std::string rng_state;
  std::uint64_t step = 0;
  std::uint64_t adam_t = 0;
  std::vector<NamedTensor> tensors;

  bool operator==(const ModelCheckpoint&) const = default;
};

// Byte layout (all integers little-endian):
//   "VPNV" | u32 version | u64 len + config | u64 len + rng state
//   | u64 step | u64 adam_t | u32 tensor count
//   | per tensor: u32 len + name, u8 dtype, u32 rank, u64 dims[rank],
//                 u64 payload offset, u64 byte length
//   | payload
std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& c);
// FormatError on bad magic, unknown version, truncation or duplicate names.
ModelCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Throws ContractError if a tensor holds non-finite values, IoError if the
// file cannot be written. Writes to a temporary and renames, so an existing
// file is never left half-written.
void save_checkpoint(const ModelCheckpoint& c, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
ModelCheckpoint capture_checkpoint(Trainer<T>& trainer);

// Rebuilds a trainer from a checkpoint. Parameter names and shapes must match
// the configuration exactly (FormatError otherwise). Stored tensors are
// converted to T if their dtype differs.
template <typename T>
std::unique_ptr<Trainer<T>> restore_trainer(const ModelCheckpoint& c);

}  // namespace vapnev

#endif  // VAPNEV_CHECKPOINT_HPP_
