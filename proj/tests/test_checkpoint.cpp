#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "unirobust/checkpoint.hpp"
#include "unirobust/error.hpp"

using namespace unirobust;

namespace {

ModelConfig config() {
  ModelConfig c;
  c.vocab_size = 12;
  c.max_seq_len = 6;
  c.hidden = 4;
  c.expand = 8;
  c.layers = 2;
  c.heads = 2;
  c.num_classes = 3;
  return c;
}

}  // namespace

TEST(Checkpoint, StreamRoundTripIsBitwise) {
  Model m(config(), 7);
  m.apply_unitary_constraints();
  std::stringstream buf;
  write_checkpoint(m, buf);
  const Model back = read_checkpoint(buf);
  EXPECT_EQ(back.config(), m.config());
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& a = m.parameters()[i];
    const auto& b = back.parameters()[i];
    EXPECT_EQ(a.key, b.key);
    EXPECT_EQ(a.unitary_flag, b.unitary_flag);
    ASSERT_EQ(a.value.size(), b.value.size());
    EXPECT_EQ(std::memcmp(a.value.data().data(), b.value.data().data(), a.value.size() * sizeof(double)), 0) << a.key;
  }
}

TEST(Checkpoint, FileRoundTripPreservesLogits) {
  const Model m(config(), 8);
  const auto path = std::filesystem::temp_directory_path() / "unirobust_checkpoint_test.ckpt";
  save_checkpoint(m, path);
  const Model back = load_checkpoint(path);
  std::filesystem::remove(path);
  const std::vector<int> tokens{2, 5, 9};
  const auto x = m.forward(tokens).logits, y = back.forward(tokens).logits;
  EXPECT_EQ(std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(double)), 0);
}

TEST(Checkpoint, MissingFileIsStageDependency) {
  try {
    load_checkpoint("/nonexistent/model.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::stage_dependency);
  }
}

TEST(Checkpoint, CorruptionIsIoError) {
  const Model m(config(), 9);
  std::stringstream buf;
  write_checkpoint(m, buf);
  const std::string bytes = buf.str();
  for (const std::string& broken : {std::string("NOTACKPT"), bytes.substr(0, bytes.size() / 2), std::string()}) {
    std::stringstream in(broken);
    try {
      read_checkpoint(in);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::io);
    }
  }
  std::string bad_version = bytes;
  bad_version[8] = 99;
  std::stringstream in(bad_version);
  EXPECT_THROW(read_checkpoint(in), Error);
}
