// Copyright 2026 The vapnev Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "vapnev/checkpoint.hpp"
#include "vapnev/errors.hpp"

using vapnev::ModelCheckpoint;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vapnev_test_" + name);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

vapnev::RunConfig tiny_run() {
  auto rc = vapnev::preset("tiny");
  rc.train.seed = 11;
  return rc;
}

vapnev::ImageBatch tiny_data() {
  vapnev::Rng rng(99);
  return vapnev::synthetic_images(32, 4, 4, 1, rng);
}

}  // namespace

TEST_CASE("checkpoint without tensors is header and config only") {
  ModelCheckpoint c;
  c.config = "{}";
  c.rng_state = "1 2 3";
  const auto bytes = vapnev::serialize_checkpoint(c);
  CHECK(bytes.size() == 4 + 4 + 8 + 2 + 8 + 5 + 8 + 8 + 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "VPNV");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(vapnev::deserialize_checkpoint(bytes) == c);
}

TEST_CASE("trainer state round-trips byte for byte") {
  vapnev::Trainer<float> trainer(tiny_run());
  const auto data = tiny_data();
  for (int i = 0; i < 3; ++i) trainer.step(data);
  const ModelCheckpoint c = vapnev::capture_checkpoint(trainer);
  CHECK(c.step == 3);
  CHECK(c.adam_t == 3);
  CHECK(c.tensors.size() == 3 * trainer.model().parameters().size());

  const auto a = temp_path("a.vpnv"), b = temp_path("b.vpnv");
  vapnev::save_checkpoint(c, a);
  const ModelCheckpoint loaded = vapnev::load_checkpoint(a);
  CHECK(loaded == c);
  vapnev::save_checkpoint(loaded, b);
  CHECK(read_bytes(a) == read_bytes(b));

  auto restored = vapnev::restore_trainer<float>(loaded);
  CHECK(vapnev::serialize_checkpoint(vapnev::capture_checkpoint(*restored)) ==
        vapnev::serialize_checkpoint(c));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("resume reproduces the uninterrupted trace") {
  const auto data = tiny_data();
  vapnev::Trainer<double> straight(tiny_run());
  std::vector<vapnev::MetricsRow> rows;
  for (int i = 0; i < 20; ++i) rows.push_back(straight.step(data));

  vapnev::Trainer<double> first(tiny_run());
  for (int i = 0; i < 10; ++i) CHECK(first.step(data) == rows[i]);
  const auto path = temp_path("resume.vpnv");
  vapnev::save_checkpoint(vapnev::capture_checkpoint(first), path);
  auto resumed = vapnev::restore_trainer<double>(vapnev::load_checkpoint(path));
  CHECK(resumed->steps_done() == 10);
  for (int i = 10; i < 20; ++i) CHECK(resumed->step(data) == rows[i]);
  std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoints are rejected") {
  vapnev::Trainer<float> trainer(tiny_run());
  trainer.step(tiny_data());
  const auto good = vapnev::serialize_checkpoint(vapnev::capture_checkpoint(trainer));

  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[0] = 'X';
    CHECK_THROWS_AS(vapnev::deserialize_checkpoint(bytes), vapnev::FormatError);
  }
  SUBCASE("version mismatch") {
    auto bytes = good;
    bytes[4] = 2;
    CHECK_THROWS_AS(vapnev::deserialize_checkpoint(bytes), vapnev::FormatError);
  }
  SUBCASE("every truncation") {
    for (std::size_t n = 0; n < good.size(); n += 1 + n / 64) {
      std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(n));
      CHECK_THROWS_AS(vapnev::deserialize_checkpoint(cut), vapnev::FormatError);
    }
    std::vector<std::uint8_t> cut(good.begin(), good.end() - 1);
    CHECK_THROWS_AS(vapnev::deserialize_checkpoint(cut), vapnev::FormatError);
  }
  SUBCASE("shape disagreeing with the config") {
    auto c = vapnev::deserialize_checkpoint(good);
    c.tensors[0].shape.back() += 1;
    c.tensors[0].data.resize(c.tensors[0].data.size() + 4 * c.tensors[0].shape[0] *
                                                          c.tensors[0].shape[1] *
                                                          c.tensors[0].shape[2]);
    CHECK_THROWS_AS(vapnev::restore_trainer<float>(c), vapnev::FormatError);
  }
  SUBCASE("missing tensor") {
    auto c = vapnev::deserialize_checkpoint(good);
    c.tensors.pop_back();
    CHECK_THROWS_AS(vapnev::restore_trainer<float>(c), vapnev::FormatError);
  }
  SUBCASE("unparsable config") {
    auto c = vapnev::deserialize_checkpoint(good);
    c.config = "{";
    CHECK_THROWS_AS(vapnev::restore_trainer<float>(c), vapnev::FormatError);
  }
}

TEST_CASE("save refuses non-finite tensors and unwritable paths") {
  ModelCheckpoint c;
  c.tensors.push_back({"w", vapnev::DType::kFloat64, {1}, std::vector<std::uint8_t>(8)});
  const double nan = std::nan("");
  std::memcpy(c.tensors[0].data.data(), &nan, 8);
  CHECK_THROWS_AS(vapnev::save_checkpoint(c, temp_path("nan.vpnv")), vapnev::ContractError);
  c.tensors.clear();
  CHECK_THROWS_AS(vapnev::save_checkpoint(c, "/nonexistent-dir/x.vpnv"), vapnev::IoError);
  CHECK_THROWS_AS(vapnev::load_checkpoint("/nonexistent-dir/x.vpnv"), vapnev::IoError);
}

TEST_CASE("single-precision checkpoint restores into double") {
  vapnev::Trainer<float> trainer(tiny_run());
  trainer.step(tiny_data());
  const auto c = vapnev::capture_checkpoint(trainer);
  auto wide = vapnev::restore_trainer<double>(c);
  const auto narrow = trainer.model().parameters();
  const auto params = wide->model().parameters();
  REQUIRE(params.size() == narrow.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i]->value.size(); ++j) {
      CHECK(params[i]->value[j] == static_cast<double>(narrow[i]->value[j]));
    }
  }
}
