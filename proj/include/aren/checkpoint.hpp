#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aren/params.hpp"

namespace aren {

// On-disk training snapshot. Layout, all little-endian:
//   8 bytes  magic "ARENCKPT"
//   u32      format version
//   u32      config text length, then that many UTF-8 bytes
//   u32      entry count
//   per entry:
//     u32 name length + bytes, u8 dtype (0 = f32), u8 rank, u32 dims[rank],
//     raw f32 payload
// Loads fail with the byte offset and, inside the entry stream, the entry
// name being read.

inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr uint8_t kDtypeF32 = 0;

struct CheckpointEntry {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  std::string config_text;  // effective config plus a [state] section
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  int64_t total_elements() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot every parameter of a store (trainable and running statistics).
void append_store(Checkpoint& ckpt, const ParamStore<float>& store);

// Copies payloads back into an already-built store by name, shape-checked.
// Every store parameter must be present in the checkpoint.
void restore_store(const Checkpoint& ckpt, ParamStore<float>& store);

// Adam moment vectors for one optimizer, stored as <tag>.<param>.m / .v.
void append_adam(Checkpoint& ckpt, const std::string& tag, Adam<float>& opt,
                 const ParamStore<float>& store);
void restore_adam(const Checkpoint& ckpt, const std::string& tag, Adam<float>& opt,
                  const ParamStore<float>& store);

}  // namespace aren
