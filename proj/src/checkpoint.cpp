#include "slotforge/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "slotforge/binary_io.hpp"
#include "slotforge/errors.hpp"

namespace slotforge {

using detail::read_le;
using detail::write_le;

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records) {
  out.write(kCheckpointMagic, 8);
  for (const auto& r : records) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.value.rank()));
    for (auto d : r.value.shape()) write_le<std::uint64_t>(out, d);
    for (double v : r.value.data()) write_le<double>(out, v);
  }
}

std::vector<CheckpointRecord> read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
    throw FormatError("checkpoint: bad magic at byte 0, expected SLTF0001");
  }
  std::vector<CheckpointRecord> records;
  while (true) {
    const auto offset = static_cast<long long>(in.tellg());
    std::uint32_t name_len = 0;
    if (!read_le(in, name_len)) break;  // clean end of file
    auto fail = [&](const std::string& what) {
      throw FormatError("checkpoint: truncated " + what + " in record starting at byte " +
                        std::to_string(offset));
    };
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail("name");
    std::uint32_t rank = 0;
    if (!read_le(in, rank)) fail("rank");
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!read_le(in, v)) fail("shape");
      d = static_cast<std::size_t>(v);
    }
    Tensor t(shape);
    for (double& v : t.data()) {
      if (!read_le(in, v)) fail("payload of '" + name + "'");
    }
    records.push_back({std::move(name), std::move(t)});
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, records);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

std::vector<CheckpointRecord> snapshot(const ParameterRegistry& registry) {
  std::vector<CheckpointRecord> out;
  out.reserve(registry.size());
  for (const Parameter* p : registry) out.push_back({p->name, p->value});
  return out;
}

void restore(ParameterRegistry& registry, const std::vector<CheckpointRecord>& records) {
  for (Parameter* p : registry) {
    const CheckpointRecord* match = nullptr;
    for (const auto& r : records) {
      if (r.name == p->name) {
        match = &r;
        break;
      }
    }
    if (match == nullptr) throw FormatError("checkpoint is missing parameter '" + p->name + "'");
    if (match->value.shape() != p->value.shape()) {
      throw ContractError("checkpoint parameter '" + p->name + "' has shape " +
                          shape_to_string(match->value.shape()) + ", model expects " +
                          shape_to_string(p->value.shape()));
    }
    p->value = match->value;
  }
}

}  // namespace slotforge
