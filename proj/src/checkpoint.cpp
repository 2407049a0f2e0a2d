#include "translution/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace translution {

namespace {

constexpr char kMagic[4] = {'T', 'L', 'S', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, T v) {
  // the build targets little-endian hosts; byte order is part of the format
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw Error("checkpoint " + path + ": truncated header");
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, entries.size());
  for (const CheckpointEntry& e : entries) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    std::visit(
        [&](const auto& t) {
          put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
          for (std::size_t d = 0; d < t.rank(); ++d) put<std::uint64_t>(os, t.extent(d));
          using Scalar = std::remove_cv_t<std::remove_reference_t<decltype(*t.data())>>;
          put<std::uint32_t>(os, std::is_same_v<Scalar, float> ? 0u : 1u);
        },
        e.tensor);
  }
  for (const CheckpointEntry& e : entries)
    std::visit(
        [&](const auto& t) {
          os.write(reinterpret_cast<const char*>(t.data()),
                   static_cast<std::streamsize>(t.size() * sizeof(*t.data())));
        },
        e.tensor);
  if (!os) throw Error("checkpoint: write failed for " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("checkpoint " + path + ": bad magic");
  const std::uint32_t version = get<std::uint32_t>(is, path);
  if (version != kVersion)
    throw Error("checkpoint " + path + ": format version " + std::to_string(version) +
                ", expected " + std::to_string(kVersion));
  const std::uint64_t count = get<std::uint64_t>(is, path);

  struct Meta {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint32_t dtype;
  };
  std::vector<Meta> metas;
  metas.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Meta m;
    const std::uint32_t name_len = get<std::uint32_t>(is, path);
    m.name.resize(name_len);
    if (!is.read(m.name.data(), name_len)) throw Error("checkpoint " + path + ": truncated name");
    const std::uint32_t rank = get<std::uint32_t>(is, path);
    for (std::uint32_t d = 0; d < rank; ++d)
      m.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(is, path)));
    m.dtype = get<std::uint32_t>(is, path);
    if (m.dtype > 1) throw Error("checkpoint " + path + ": unknown dtype tag");
    metas.push_back(std::move(m));
  }

  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (Meta& m : metas) {
    CheckpointEntry e;
    e.name = std::move(m.name);
    if (m.dtype == 0) {
      Tensor<float> t(m.shape);
      const std::size_t bytes = t.size() * sizeof(float);
      if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes)))
        throw Error("checkpoint " + path + ": expected " + std::to_string(bytes) +
                    " payload bytes for " + e.name + ", found fewer");
      e.tensor = std::move(t);
    } else {
      Tensor<double> t(m.shape);
      const std::size_t bytes = t.size() * sizeof(double);
      if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes)))
        throw Error("checkpoint " + path + ": expected " + std::to_string(bytes) +
                    " payload bytes for " + e.name + ", found fewer");
      e.tensor = std::move(t);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace translution
