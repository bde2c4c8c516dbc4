#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpalm/params.hpp"

namespace fedpalm {

// On-disk model checkpoint. Binary layout (little-endian throughout):
//   magic "FPCK", u32 version, u64 config_hash, u32 component count,
//   per component: name (u32 length + bytes), u32 segment count,
//     per segment: name (u32 + bytes), u32 rank, u64 dims...
//   then, component by component, the raw f64 data in segment order.
// Round-trips bitwise.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, ParamVector>> components;

  const ParamVector& component(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fedpalm
