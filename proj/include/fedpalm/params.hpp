#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedpalm {

// One named slice of a ParamVector.
struct Segment {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Flat named-segment parameter store for one model component (expert or
// embedding). The unit of aggregation, freezing and checkpointing.
class ParamVector {
 public:
  void add(std::string name, std::vector<std::size_t> shape, double fill = 0.0);

  bool has(std::string_view name) const;
  std::span<double> seg(std::string_view name);
  std::span<const double> seg(std::string_view name) const;
  const Segment& segment_info(std::string_view name) const;

  const std::vector<Segment>& segments() const { return segments_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool same_layout(const ParamVector& other) const;
  static ParamVector zeros_like(const ParamVector& other);

  void fill(double v);
  void scale(double a);
  // this += a * x (layouts must match).
  void axpy(double a, const ParamVector& x);

  // FNV-1a over the raw little-endian bytes of the data.
  std::uint64_t content_hash() const;

 private:
  std::vector<Segment> segments_;
  std::vector<double> data_;
};

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(std::string_view s);

}  // namespace fedpalm
