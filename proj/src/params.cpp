#include "fedpalm/params.hpp"

#include <cstring>
#include <sstream>

#include "fedpalm/errors.hpp"

namespace fedpalm {

void ParamVector::add(std::string name, std::vector<std::size_t> shape, double fill) {
  if (has(name)) throw ConfigError("ParamVector: duplicate segment '" + name + "'");
  Segment s;
  s.name = std::move(name);
  s.shape = std::move(shape);
  s.offset = data_.size();
  s.size = 1;
  for (std::size_t d : s.shape) s.size *= d;
  if (s.size == 0) throw DimensionError("ParamVector: empty segment '" + s.name + "'");
  data_.resize(s.offset + s.size, fill);
  segments_.push_back(std::move(s));
}

bool ParamVector::has(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return true;
  return false;
}

const Segment& ParamVector::segment_info(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw ConfigError("ParamVector: unknown segment '" + std::string(name) + "'");
}

std::span<double> ParamVector::seg(std::string_view name) {
  const Segment& s = segment_info(name);
  return {data_.data() + s.offset, s.size};
}

std::span<const double> ParamVector::seg(std::string_view name) const {
  const Segment& s = segment_info(name);
  return {data_.data() + s.offset, s.size};
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment &a = segments_[i], &b = other.segments_[i];
    if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) return false;
  }
  return true;
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
  ParamVector p;
  p.segments_ = other.segments_;
  p.data_.assign(other.data_.size(), 0.0);
  return p;
}

void ParamVector::fill(double v) {
  for (double& x : data_) x = v;
}

void ParamVector::scale(double a) {
  for (double& x : data_) x *= a;
}

void ParamVector::axpy(double a, const ParamVector& x) {
  if (!same_layout(x)) throw ProtocolError("ParamVector::axpy: layout mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s) {
  return fnv1a(s.data(), s.size());
}

std::uint64_t ParamVector::content_hash() const {
  return fnv1a(data_.data(), data_.size() * sizeof(double));
}

}  // namespace fedpalm
