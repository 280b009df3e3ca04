#include <doctest.h>

#include <complex>
#include <cstdio>
#include <filesystem>

#include "snm/container.hpp"
#include "snm/rng.hpp"

using namespace snm;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("container: round trip of every dtype is bit-exact") {
  Rng rng(5);
  Tensor<float> f32({3, 4});
  Tensor<double> f64({2, 2, 2});
  Tensor<std::complex<float>> c64({5});
  Tensor<std::complex<double>> c128({2, 3});
  Tensor<std::uint8_t> u8({7});
  Tensor<std::int32_t> i32({4, 1});
  for (std::int64_t i = 0; i < f32.numel(); ++i) f32[i] = static_cast<float>(rng.normal());
  for (std::int64_t i = 0; i < f64.numel(); ++i) f64[i] = rng.normal();
  for (std::int64_t i = 0; i < c64.numel(); ++i)
    c64[i] = {static_cast<float>(rng.normal()), static_cast<float>(rng.normal())};
  for (std::int64_t i = 0; i < c128.numel(); ++i) c128[i] = {rng.normal(), rng.normal()};
  for (std::int64_t i = 0; i < u8.numel(); ++i) u8[i] = static_cast<std::uint8_t>(rng.below(256));
  for (std::int64_t i = 0; i < i32.numel(); ++i)
    i32[i] = static_cast<std::int32_t>(rng.range(-100000, 100000));

  TensorContainer c;
  c.add("f32", f32);
  c.add("f64", f64);
  c.add("c64", c64);
  c.add("c128", c128);
  c.add("u8", u8);
  c.add("i32", i32);

  const auto bytes = c.serialize();
  const auto c2 = TensorContainer::deserialize(bytes);
  CHECK(c2.serialize() == bytes);  // byte-identical re-serialization

  const auto f32b = c2.get<float>("f32");
  REQUIRE(f32b.dims() == f32.dims());
  for (std::int64_t i = 0; i < f32.numel(); ++i) CHECK(f32b[i] == f32[i]);
  const auto c128b = c2.get<std::complex<double>>("c128");
  for (std::int64_t i = 0; i < c128.numel(); ++i) CHECK(c128b[i] == c128[i]);
  const auto u8b = c2.get<std::uint8_t>("u8");
  for (std::int64_t i = 0; i < u8.numel(); ++i) CHECK(u8b[i] == u8[i]);
}

TEST_CASE("container: header layout is exactly as documented") {
  TensorContainer c;
  Tensor<std::uint8_t> t({2, 3});
  for (std::int64_t i = 0; i < 6; ++i) t[i] = static_cast<std::uint8_t>(i);
  c.add("m", t);
  const auto b = c.serialize();
  REQUIRE(b.size() == 4 + 1 + 2 + 2 + 1 + 1 + 1 + 8 + 6);
  CHECK(b[0] == 'S');
  CHECK(b[1] == 'N');
  CHECK(b[2] == 'M');
  CHECK(b[3] == 'T');
  CHECK(b[4] == 1);           // version
  CHECK(b[5] == 1);           // entry count lo
  CHECK(b[6] == 0);           // entry count hi
  CHECK(b[7] == 1);           // name length lo
  CHECK(b[8] == 0);           // name length hi
  CHECK(b[9] == 'm');
  CHECK(b[10] == 5);          // dtype u8
  CHECK(b[11] == 2);          // ndim
  CHECK(b[12] == 2);          // dim0 little-endian
  CHECK(b[16] == 3);          // dim1
  CHECK(b[20] == 0);          // payload row-major
  CHECK(b[25] == 5);
}

TEST_CASE("container: save and load through a file") {
  const auto path = temp_path("snm_container_test.snmt");
  TensorContainer c;
  Tensor<double> t({3});
  t[0] = 1.5;
  t[1] = -2.25;
  t[2] = 1e-300;
  c.add("x", t);
  c.save(path);
  const auto c2 = TensorContainer::load(path);
  const auto t2 = c2.get<double>("x");
  for (int i = 0; i < 3; ++i) CHECK(t2[i] == t[i]);
  std::remove(path.c_str());
}

TEST_CASE("container: error paths") {
  CHECK_THROWS_AS(TensorContainer::load("/nonexistent/file.snmt"), io_error);

  std::vector<std::uint8_t> bad_magic = {'X', 'X', 'X', 'X', 1, 0, 0};
  CHECK_THROWS_AS(TensorContainer::deserialize(bad_magic), format_error);

  TensorContainer c;
  Tensor<float> t({2});
  c.add("a", t);
  CHECK_THROWS_AS(c.add("a", t), parameter_error);  // duplicate name
  CHECK_THROWS_AS(c.get<float>("missing"), io_error);
  CHECK_THROWS_AS(c.get<double>("a"), format_error);  // dtype mismatch

  auto bytes = c.serialize();
  bytes.pop_back();  // truncated payload
  CHECK_THROWS_AS(TensorContainer::deserialize(bytes), format_error);

  auto bytes2 = c.serialize();
  bytes2.push_back(0);  // trailing garbage
  CHECK_THROWS_AS(TensorContainer::deserialize(bytes2), format_error);

  auto bytes3 = c.serialize();
  bytes3[4] = 9;  // unsupported version
  CHECK_THROWS_AS(TensorContainer::deserialize(bytes3), format_error);
}
