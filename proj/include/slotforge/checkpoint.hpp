#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "slotforge/autograd.hpp"

namespace slotforge {

// Binary layout: magic "SLTF0001", then records until end of file. Each
// record is u32 name length, name bytes, u32 rank, rank × u64 dims, and the
// payload as little-endian f64. All integers little-endian.
inline constexpr char kCheckpointMagic[9] = "SLTF0001";

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

std::vector<CheckpointRecord> snapshot(const ParameterRegistry& registry);
/// Copies matching records into the registry. Every registry entry must be
/// present with the same shape; extra records are ignored.
void restore(ParameterRegistry& registry, const std::vector<CheckpointRecord>& records);

}  // namespace slotforge
