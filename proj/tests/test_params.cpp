#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedpalm/errors.hpp"
#include "fedpalm/params.hpp"
#include "fedpalm/rng.hpp"

using namespace fedpalm;

TEST_CASE("segments are contiguous and named") {
  ParamVector p;
  p.add("a", {2, 3});
  p.add("b", {4}, 1.0);
  CHECK(p.size() == 10);
  CHECK(p.seg("a").size() == 6);
  CHECK(p.seg("b")[0] == 1.0);
  CHECK(p.segment_info("b").offset == 6);
  CHECK(p.has("a"));
  CHECK_FALSE(p.has("c"));
  CHECK_THROWS_AS(p.seg("c"), ConfigError);
  CHECK_THROWS_AS(p.add("a", {1}), ConfigError);
}

TEST_CASE("layout comparison and axpy") {
  ParamVector p, q, r;
  p.add("a", {2});
  q.add("a", {2});
  r.add("a", {3});
  CHECK(p.same_layout(q));
  CHECK_FALSE(p.same_layout(r));
  p.seg("a")[0] = 1.0;
  p.seg("a")[1] = 2.0;
  q.seg("a")[0] = 10.0;
  q.seg("a")[1] = 20.0;
  p.axpy(0.5, q);
  CHECK(p.seg("a")[0] == 6.0);
  CHECK(p.seg("a")[1] == 12.0);
  CHECK_THROWS_AS(p.axpy(1.0, r), ProtocolError);
}

TEST_CASE("zeros_like preserves layout") {
  ParamVector p;
  p.add("a", {2}, 5.0);
  auto z = ParamVector::zeros_like(p);
  CHECK(z.same_layout(p));
  CHECK(z.data()[0] == 0.0);
}

TEST_CASE("content hash tracks data") {
  ParamVector p;
  p.add("a", {3}, 1.0);
  const auto h0 = p.content_hash();
  CHECK(h0 == p.content_hash());
  p.seg("a")[1] = 2.0;
  CHECK(p.content_hash() != h0);
}

TEST_CASE("fnv1a string hashing is stable") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
