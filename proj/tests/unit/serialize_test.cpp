// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "support/fixtures.hpp"
#include "weightforge/error.hpp"

using namespace wforge;

namespace {

std::string bytes_of(const Model& m) {
  std::stringstream s;
  save_model(m, s);
  return s.str();
}

}  // namespace

TEST(ModelFile, RoundTripIsBitExact) {
  Model m = build_cnn({28, 28, 1}, 10, 4);
  m.provenance = {42, "mnist", {"train:cnn", "handcraft:square"}};
  std::stringstream s;
  save_model(m, s);
  const Model back = load_model(s);
  EXPECT_TRUE(wforge::testing::bit_equal(m, back));
  EXPECT_EQ(back.provenance, m.provenance);
  EXPECT_EQ(bytes_of(back), bytes_of(m));

  const auto path = std::filesystem::temp_directory_path() / "wforge_roundtrip.wf";
  save_model(m, path.string());
  EXPECT_TRUE(wforge::testing::bit_equal(load_model(path.string()), m));
  std::filesystem::remove(path);
}

TEST(ModelFile, LayoutIsMagicThenJsonHeader) {
  const std::string b = bytes_of(build_fc({4}, 3, 2, 1));
  ASSERT_GT(b.size(), 16u);
  EXPECT_EQ(b.substr(0, 8), "WFORGE01");
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | std::uint8_t(b[8 + i]);
  const auto header = nlohmann::json::parse(b.substr(16, len));
  EXPECT_EQ(header.at("format_version"), kModelFormatVersion);
  // 4*3 + 3 + 3*2 + 2 floats after the header.
  EXPECT_EQ(b.size(), 16 + len + 23 * sizeof(Scalar));
}

TEST(ModelFile, MalformedInputsReportOffsets) {
  const std::string good = bytes_of(build_fc({4}, 3, 2, 1));
  const auto parse = [](std::string s) {
    return parse_model(std::vector<std::uint8_t>(s.begin(), s.end()));
  };
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  try {
    parse(bad_magic);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW(parse(good.substr(0, good.size() - 1)), ParseError);
  EXPECT_THROW(parse(good.substr(0, 12)), ParseError);
  std::string bad_json = good;
  bad_json[16] = '#';
  EXPECT_THROW(parse(bad_json), ParseError);
  EXPECT_THROW(load_model("/nonexistent/model.wf"), IoError);
}
