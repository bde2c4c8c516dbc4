#include "fedpalm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fedpalm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace fedpalm {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 20)) throw ParseError("checkpoint: absurd string length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace

const ParamVector& Checkpoint::component(const std::string& name) const {
  for (const auto& [n, p] : components)
    if (n == name) return p;
  throw IoError("checkpoint: missing component '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u64(os, ck.config_hash);
  put_u32(os, static_cast<std::uint32_t>(ck.components.size()));
  for (const auto& [name, pv] : ck.components) {
    put_str(os, name);
    put_u32(os, static_cast<std::uint32_t>(pv.segments().size()));
    for (const auto& seg : pv.segments()) {
      put_str(os, seg.name);
      put_u32(os, static_cast<std::uint32_t>(seg.shape.size()));
      for (std::size_t d : seg.shape) put_u64(os, d);
    }
  }
  for (const auto& [name, pv] : ck.components) {
    os.write(reinterpret_cast<const char*>(pv.data().data()),
             static_cast<std::streamsize>(pv.data().size() * sizeof(double)));
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("checkpoint: bad magic in " + path);
  if (get_u32(is) != kVersion) throw ParseError("checkpoint: unsupported version in " + path);

  Checkpoint ck;
  ck.config_hash = get_u64(is);
  const std::uint32_t ncomp = get_u32(is);
  for (std::uint32_t c = 0; c < ncomp; ++c) {
    const std::string name = get_str(is);
    ParamVector pv;
    const std::uint32_t nseg = get_u32(is);
    for (std::uint32_t s = 0; s < nseg; ++s) {
      const std::string seg_name = get_str(is);
      const std::uint32_t rank = get_u32(is);
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(get_u64(is));
      pv.add(seg_name, shape);
    }
    ck.components.emplace_back(name, std::move(pv));
  }
  for (auto& [name, pv] : ck.components) {
    is.read(reinterpret_cast<char*>(pv.data().data()),
            static_cast<std::streamsize>(pv.data().size() * sizeof(double)));
  }
  if (!is) throw ParseError("checkpoint: truncated file " + path);
  return ck;
}

}  // namespace fedpalm
