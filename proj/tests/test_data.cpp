#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gmml/data.hpp"
#include "gmml/error.hpp"

using namespace gmml;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("gmml_data_" + name)).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void expect_load_error(const std::string& bytes, ErrorCode code) {
  const std::string path = temp_path("corrupt.gmds");
  std::ofstream(path, std::ios::binary) << bytes;
  try {
    load_dataset(path);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.classes = 10;
  s.samples_per_class = 9;
  s.dim = 4;
  s.seed = 3;
  s.fractions = {0.5, 0.2, 0.3};
  return s;
}

}  // namespace

TEST_CASE("tri-modal-100 preset") {
  const auto spec = synthetic_preset("tri-modal-100");
  REQUIRE(spec.has_value());
  CHECK(spec->classes == 100);
  CHECK(spec->modes_per_class == 3);
  CHECK(spec->dim == 16);
  CHECK(spec->samples_per_class == 120);
  CHECK(spec->mode_separation == 4.0);
  CHECK(spec->class_separation == 8.0);
  CHECK(spec->noise_sigma == 1.0);
  CHECK_FALSE(synthetic_preset("nope").has_value());
  const Dataset d = generate_synthetic(*spec);
  CHECK(d.size() == 12000);
  CHECK(d.classes_in(Split::train).size() == 64);
  CHECK(d.classes_in(Split::val).size() == 16);
  CHECK(d.classes_in(Split::test).size() == 20);
}

TEST_CASE("split arithmetic") {
  const Dataset d = generate_synthetic(small_spec());
  CHECK(d.classes_in(Split::train).size() == 5);
  CHECK(d.classes_in(Split::val).size() == 2);
  CHECK(d.classes_in(Split::test).size() == 3);
  const Dataset all = split_classes(d, {1.0, 0.0, 0.0}, 1);
  CHECK(all.classes_in(Split::train).size() == 10);
  CHECK(all.classes_in(Split::test).empty());
  CHECK_THROWS_AS(split_classes(d, {0.5, 0.5, 0.5}, 1), Error);
}

TEST_CASE("splits are disjoint for every seed") {
  const Dataset base = generate_synthetic(small_spec());
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Dataset d = split_classes(base, {0.5, 0.2, 0.3}, seed);
    std::set<ClassId> seen;
    std::size_t total = 0;
    for (Split s : {Split::train, Split::val, Split::test}) {
      for (ClassId c : d.classes_in(s)) {
        seen.insert(c);
        ++total;
      }
    }
    CHECK(seen.size() == total);
    CHECK(total == 10);
  }
}

TEST_CASE("generation is deterministic") {
  CHECK(generate_synthetic(small_spec()) == generate_synthetic(small_spec()));
  SyntheticSpec other = small_spec();
  other.seed = 4;
  CHECK_FALSE(generate_synthetic(other) == generate_synthetic(small_spec()));
}

TEST_CASE("degenerate noise collapses each class onto its center") {
  SyntheticSpec s = small_spec();
  s.modes_per_class = 1;
  s.noise_sigma = 1e-12;
  const Dataset d = generate_synthetic(s);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.labels[i] != d.labels[j]) continue;
      for (std::size_t k = 0; k < d.dim; ++k) CHECK(std::abs(d.row(i)[k] - d.row(j)[k]) <= 2e-6);
    }
  }
}

TEST_CASE("invalid specs") {
  SyntheticSpec s = small_spec();
  s.dim = 0;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
  s = small_spec();
  s.noise_sigma = 0;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
  s = small_spec();
  s.classes = 0;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
}

TEST_CASE("binary round trip") {
  Dataset d = generate_synthetic(small_spec());
  const std::string path = temp_path("rt.gmds");
  save_dataset(d, path, PayloadPrecision::f64);
  CHECK(load_dataset(path) == d);
  for (double& v : d.features) v = static_cast<float>(v);
  save_dataset(d, path, PayloadPrecision::f32);
  const auto size32 = std::filesystem::file_size(path);
  CHECK(load_dataset(path) == d);
  save_dataset(d, path, PayloadPrecision::f64);
  CHECK(std::filesystem::file_size(path) == size32 + 4 * d.features.size());
  std::filesystem::remove(path);
}

TEST_CASE("corrupted files") {
  const Dataset d = generate_synthetic(small_spec());
  const std::string path = temp_path("c.gmds");
  save_dataset(d, path);
  const std::string bytes = read_bytes(path);

  expect_load_error(bytes.substr(0, bytes.size() - 100), ErrorCode::truncated_payload);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  expect_load_error(flipped, ErrorCode::crc_mismatch);
  std::string magic = bytes;
  magic[1] = 'X';
  expect_load_error(magic, ErrorCode::bad_magic);
  std::string version = bytes;
  version[4] = 7;
  expect_load_error(version, ErrorCode::unsupported_version);
  std::filesystem::remove(path);
}

TEST_CASE("header dimension disagreeing with the payload") {
  Dataset d;
  d.dim = 4;
  for (int i = 0; i < 6; ++i) {
    for (int k = 0; k < 4; ++k) d.features.push_back(i + 0.25 * k);
    d.labels.push_back(static_cast<ClassId>(i % 2));
  }
  d.splits = {{0, Split::train}, {1, Split::test}};
  const std::string path = temp_path("dim.gmds");
  save_dataset(d, path);
  std::string bytes = read_bytes(path);
  bytes[8] = 8;  // D follows the magic and version
  expect_load_error(bytes, ErrorCode::dimension_mismatch);
  std::filesystem::remove(path);
}

TEST_CASE("csv fixtures") {
  const Dataset d = parse_dataset_csv("dim,2\n0.5,1,0,train\n1.5,2,0,train\n-1,0,1,test\n-2,0,1,2\n");
  CHECK(d.dim == 2);
  CHECK(d.size() == 4);
  CHECK(d.row(1)[0] == 1.5);
  CHECK(d.splits.at(0) == Split::train);
  CHECK(d.splits.at(1) == Split::test);
  const std::string path = temp_path("fixture.csv");
  std::ofstream(path) << "2\n0.5,1,0,train\n1.5,2,0,train\n-1,0,1,test\n-2,0,1,test\n";
  CHECK(load_dataset(path) == d);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_dataset_csv("dim,2\n0.5,train\n"), Error);
  CHECK_THROWS_AS(parse_dataset_csv("dim,2\n0.5,1,0,sideways\n"), Error);
}

TEST_CASE("samples of a split") {
  const Dataset d = generate_synthetic(small_spec());
  const auto test = d.samples_in(Split::test);
  CHECK(test.size() == 3 * 9);
  const auto classes = d.classes_in(Split::test);
  for (const auto& s : test) CHECK(std::find(classes.begin(), classes.end(), s.label) != classes.end());
}
