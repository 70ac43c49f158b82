// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"
#include "swarm/checkpoint.hpp"
#include "swarm/lora.hpp"

using namespace swarm;
using namespace swarm::testing;

namespace {

ErrorKind load_error(std::string_view bytes) {
  try {
    load_checkpoint(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "checkpoint loaded";
  return ErrorKind::state;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto model = ScorerModel::init(micro_config(), 21);
  const auto bytes = save_checkpoint(model);
  const auto back = load_checkpoint(bytes);
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(save_checkpoint(back), bytes);
  EXPECT_EQ(sequence_log_prob(back, "input", "Yes"), sequence_log_prob(model, "input", "Yes"));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "swarm_ckpt_test";
  std::filesystem::remove_all(dir);
  const auto model = ScorerModel::init(micro_config(), 22);
  write_file(dir / "nested" / "m.ckpt", save_checkpoint(model));
  EXPECT_EQ(read_file(dir / "nested" / "m.ckpt"), save_checkpoint(model));
  EXPECT_THROW(read_file(dir / "missing.ckpt"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto bytes = save_checkpoint(ScorerModel::init(micro_config(), 23));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(load_error(bad_magic), ErrorKind::format);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(load_error(bad_version), ErrorKind::format);
  EXPECT_EQ(load_error(bytes.substr(0, bytes.size() - 3)), ErrorKind::format);
  EXPECT_EQ(load_error(bytes + "x"), ErrorKind::format);
  EXPECT_EQ(load_error(""), ErrorKind::format);
  for (std::size_t cut : {std::size_t{10}, std::size_t{40}, bytes.size() / 2}) {
    EXPECT_EQ(load_error(bytes.substr(0, cut)), ErrorKind::format) << cut;
  }
}

TEST(Checkpoint, RefusesAdaptedModelAndAdapterBytes) {
  auto model = ScorerModel::init(micro_config(), 24);
  const auto base_bytes = save_checkpoint(model);
  attach(model, LoraSettings{}, 1);
  EXPECT_THROW(save_checkpoint(model), Error);
  EXPECT_EQ(serialize_base(model), base_bytes);
  EXPECT_EQ(load_error(save_adapters(model)), ErrorKind::format);
}

TEST(Checkpoint, HashSeparatesModels) {
  const auto a = save_checkpoint(ScorerModel::init(micro_config(), 25));
  const auto b = save_checkpoint(ScorerModel::init(micro_config(), 26));
  EXPECT_EQ(checkpoint_hash(a), checkpoint_hash(a));
  EXPECT_NE(checkpoint_hash(a), checkpoint_hash(b));
  EXPECT_EQ(checkpoint_hash(""), 0xcbf29ce484222325ULL);
}
