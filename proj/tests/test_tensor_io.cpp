#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "hide/error.hpp"
#include "hide/tensor_io.hpp"

namespace hide {
namespace {

using testing::Rng;

ExampleRecord small_record() {
  ExampleRecord r;
  r.id = "small";
  r.prompt_tokens = {"a", "b"};
  r.output_tokens = {"c", "d"};
  r.input_hidden = HiddenMatrix(2, 3, {1, 2, 3, 4, 5, 6});
  r.output_hidden = HiddenMatrix(2, 3, {6, 5, 4, 3, 2, 1});
  r.output_logprobs = {-0.5, -1.5};
  r.references = {"c d"};
  return r;
}

std::string serialize(const ExampleRecord& r) {
  std::ostringstream out(std::ios::binary);
  write_record(r, out);
  return out.str();
}

ExampleRecord deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_record(in);
}

FormatError::Kind format_kind(const std::string& bytes) {
  try {
    deserialize(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError raised";
  return FormatError::Kind::malformed_metadata;
}

std::uint32_t u32_at(const std::string& bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(k)]);
  return v;
}

void expect_bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(float)));
}

TEST(TensorIo, TwoByThreeTensorHasEightByteHeaderAnd24PayloadBytes) {
  const auto bytes = serialize(small_record());
  const auto nl = bytes.find('\n');
  ASSERT_NE(nl, std::string::npos);
  const auto meta = nlohmann::json::parse(bytes.substr(0, nl));
  const std::size_t block = nl + 1;

  EXPECT_EQ(bytes.substr(block, 4), "HIDE");
  EXPECT_EQ(u32_at(bytes, block + 4), 1u);
  EXPECT_EQ(u32_at(bytes, block + 8), 2u);

  const auto& t0 = meta["tensors"][0];
  EXPECT_EQ(t0["name"], "input_hidden");
  const std::size_t at = block + t0["offset"].get<std::size_t>();
  EXPECT_EQ(u32_at(bytes, at), 2u);
  EXPECT_EQ(u32_at(bytes, at + 4), 3u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(std::bit_cast<float>(u32_at(bytes, at + 8 + 4 * k)), static_cast<float>(k + 1));
  }
  const auto& t1 = meta["tensors"][1];
  EXPECT_EQ(t1["offset"].get<std::size_t>() - t0["offset"].get<std::size_t>(), 8u + 24u);
  EXPECT_EQ(meta["block_bytes"].get<std::size_t>(), 12u + 2 * (8u + 24u));
  EXPECT_EQ(bytes.size(), block + 12u + 2 * (8u + 24u));
}

TEST(TensorIo, WriteReturnsByteCount) {
  std::ostringstream out(std::ios::binary);
  const auto n = write_record(small_record(), out);
  EXPECT_EQ(n, out.str().size());
}

TEST(TensorIo, EmptyOutputRoundTrips) {
  auto r = small_record();
  r.output_tokens.clear();
  r.output_hidden = HiddenMatrix(0, 3);
  r.output_logprobs.clear();
  EXPECT_EQ(deserialize(serialize(r)), r);
}

TEST(TensorIo, EmptyInputRoundTrips) {
  auto r = small_record();
  r.prompt_tokens.clear();
  r.input_hidden = HiddenMatrix(0, 3);
  EXPECT_EQ(deserialize(serialize(r)), r);
}

TEST(TensorIo, RandomRecordsRoundTripBitExactly) {
  Rng rng(11);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto r = testing::random_record(rng, i);
    const auto back = deserialize(serialize(r));
    ASSERT_EQ(back, r) << "record " << i;
    expect_bitwise_equal(back.input_hidden.data(), r.input_hidden.data());
    expect_bitwise_equal(back.output_hidden.data(), r.output_hidden.data());
    if (r.final_input_logits) expect_bitwise_equal(*back.final_input_logits, *r.final_input_logits);
    for (std::size_t g = 0; g < r.extra_generations.size(); ++g) {
      expect_bitwise_equal(back.extra_generations[g].pooled_hidden, r.extra_generations[g].pooled_hidden);
    }
  }
}

TEST(TensorIo, TensorByteLengthIsHeaderPlusPayload) {
  Rng rng(5);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto r = testing::random_record(rng, i);
    const auto bytes = serialize(r);
    const auto meta = nlohmann::json::parse(bytes.substr(0, bytes.find('\n')));
    std::size_t expected = 12;
    for (const auto& t : meta["tensors"]) expected += 8 + 4 * t["rows"].get<std::size_t>() * t["dim"].get<std::size_t>();
    EXPECT_EQ(meta["block_bytes"].get<std::size_t>(), expected);
    EXPECT_EQ(bytes.size(), bytes.find('\n') + 1 + expected);
  }
}

TEST(TensorIo, CorruptedMagicIsRejected) {
  auto bytes = serialize(small_record());
  bytes[bytes.find('\n') + 4] = 'F';
  EXPECT_EQ(format_kind(bytes), FormatError::Kind::magic_mismatch);
}

TEST(TensorIo, FutureVersionIsRejected) {
  auto bytes = serialize(small_record());
  bytes[bytes.find('\n') + 5] = 2;
  EXPECT_EQ(format_kind(bytes), FormatError::Kind::unsupported_version);
}

TEST(TensorIo, MissingRowReportsExpectedAndAvailableBytes) {
  auto r = small_record();
  r.prompt_tokens = {"a", "b", "c"};
  r.input_hidden = HiddenMatrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto bytes = serialize(r);
  // Keep the block only up to the first two rows of input_hidden.
  bytes.resize(bytes.find('\n') + 1 + 12 + 8 + 2 * 12);
  try {
    deserialize(bytes);
    FAIL() << "truncation not detected";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::truncated);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 36 bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("only 24 available"), std::string::npos) << msg;
  }
}

TEST(TensorIo, UnterminatedMetadataIsTruncation) {
  const auto bytes = serialize(small_record());
  EXPECT_EQ(format_kind(bytes.substr(0, bytes.find('\n'))), FormatError::Kind::truncated);
}

TEST(TensorIo, GarbageMetadataIsMalformed) {
  EXPECT_EQ(format_kind("{not json\n"), FormatError::Kind::malformed_metadata);
  EXPECT_EQ(format_kind("[1,2]\n"), FormatError::Kind::malformed_metadata);
  EXPECT_EQ(format_kind("{\"id\": 3}\n"), FormatError::Kind::malformed_metadata);
}

TEST(TensorIo, NonFiniteTensorIsRejectedByName) {
  auto r = small_record();
  r.output_hidden(1, 2) = std::numeric_limits<float>::quiet_NaN();
  std::ostringstream out;
  try {
    write_record(r, out);
    FAIL() << "non-finite value accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("output_hidden"), std::string::npos) << e.what();
  }
  r = small_record();
  r.final_input_logits = std::vector<float>{1.0f, std::numeric_limits<float>::infinity()};
  try {
    write_record(r, out);
    FAIL() << "non-finite logits accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("final_input_logits"), std::string::npos) << e.what();
  }
}

TEST(TensorIo, InvariantViolationsAreValidationErrors) {
  std::ostringstream out;
  auto r = small_record();
  r.output_logprobs = {-0.5, 0.1};
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.prompt_tokens.push_back("extra");
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.output_hidden = HiddenMatrix(2, 2, {1, 2, 3, 4});
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.keyword_ranks_input = std::vector<std::size_t>{1, 1};
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.keyword_ranks_output = std::vector<std::size_t>{2};
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.precomputed_similarity = 1.5;
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.extra_generations.push_back({{"x"}, {-1.0}, {1.0f, 2.0f}, "x"});
  EXPECT_THROW(write_record(r, out), ValidationError);

  r = small_record();
  r.num_layers = 4;
  r.layer = 4;
  EXPECT_THROW(write_record(r, out), ValidationError);
}

TEST(TensorIo, ContainerReaderReadsConcatenatedRecords) {
  Rng rng(3);
  std::vector<ExampleRecord> records;
  std::ostringstream out(std::ios::binary);
  for (std::size_t i = 0; i < 7; ++i) {
    records.push_back(testing::random_record(rng, i));
    write_record(records.back(), out);
  }
  std::istringstream in(out.str(), std::ios::binary);
  EXPECT_EQ(read_all(in), records);
}

TEST(TensorIo, ReaderContinuesAfterInvalidRecord) {
  auto bytes = serialize(small_record());
  // Same framing, but the logprob breaks an invariant.
  const auto pos = bytes.find("-0.5");
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, 4, " 0.5");
  auto good = small_record();
  good.id = "after";
  const auto stream = bytes + serialize(good);
  std::istringstream in(stream, std::ios::binary);
  ContainerReader reader(in);
  EXPECT_THROW(reader.next(), ValidationError);
  const auto next = reader.next();
  ASSERT_TRUE(next.has_value());
  EXPECT_EQ(next->id, "after");
  EXPECT_FALSE(reader.next().has_value());
  EXPECT_EQ(reader.records_read(), 2u);
}

TEST(TensorIo, DirectoryListsContainersSortedByName) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "hide_tensor_io_dir";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<ExampleRecord> one{small_record()};
  write_container(dir / "b.hiderec", one);
  write_container(dir / "a.hiderec", one);
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto files = container_files(dir);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.hiderec");
  EXPECT_EQ(files[1].filename(), "b.hiderec");
  EXPECT_THROW(container_files(dir / "missing.hiderec"), IoError);
  fs::remove_all(dir);
}

TEST(TensorIo, FuzzedBytesOnlyRaiseLibraryErrors) {
  Rng rng(99);
  const auto valid = serialize(small_record());
  for (int trial = 0; trial < 2000; ++trial) {
    std::string bytes;
    if (trial % 2 == 0) {
      bytes = valid;
      const std::size_t flips = testing::uniform_int(rng, 1, 6);
      for (std::size_t f = 0; f < flips; ++f) {
        bytes[testing::uniform_int(rng, 0, bytes.size() - 1)] = static_cast<char>(testing::uniform_int(rng, 0, 255));
      }
      if (trial % 4 == 0) bytes.resize(testing::uniform_int(rng, 0, bytes.size()));
    } else {
      bytes.resize(testing::uniform_int(rng, 0, 256));
      for (char& c : bytes) c = static_cast<char>(testing::uniform_int(rng, 0, 255));
    }
    std::istringstream in(bytes, std::ios::binary);
    try {
      read_all(in);
    } catch (const Error&) {
    } catch (const std::exception& e) {
      FAIL() << "trial " << trial << ": non-library exception " << e.what();
    }
  }
}

}  // namespace
}  // namespace hide
