#include "hide/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "hide/error.hpp"

namespace hide {

namespace {

using nlohmann::json;

constexpr std::size_t kHeaderBytes = 12;  // magic + version + tensor count
constexpr std::size_t kShapeBytes = 8;
constexpr std::size_t kMaxMetadataBytes = std::size_t{1} << 28;
constexpr std::size_t kReadChunk = std::size_t{1} << 20;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct TensorRef {
  std::string name;
  std::uint32_t rows;
  std::uint32_t dim;
  std::span<const float> values;
};

std::vector<TensorRef> tensors_of(const ExampleRecord& r) {
  auto shape = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  std::vector<TensorRef> out;
  out.push_back({"input_hidden", shape(r.input_hidden.rows()), shape(r.input_hidden.dim()),
                 r.input_hidden.data()});
  out.push_back({"output_hidden", shape(r.output_hidden.rows()), shape(r.output_hidden.dim()),
                 r.output_hidden.data()});
  if (r.final_input_logits) {
    out.push_back({"final_input_logits", 1, shape(r.final_input_logits->size()), *r.final_input_logits});
  }
  for (std::size_t g = 0; g < r.extra_generations.size(); ++g) {
    const auto& pooled = r.extra_generations[g].pooled_hidden;
    out.push_back({"generation." + std::to_string(g) + ".pooled_hidden", 1, shape(pooled.size()), pooled});
  }
  return out;
}

bool finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

[[noreturn]] void invalid(const std::string& id, const std::string& msg) {
  throw ValidationError("record '" + id + "': " + msg);
}

void check_ranks(const ExampleRecord& r, const std::optional<std::vector<std::size_t>>& ranks,
                 std::size_t limit, const char* name) {
  if (!ranks) return;
  std::unordered_set<std::size_t> seen;
  for (std::size_t idx : *ranks) {
    if (idx >= limit) invalid(r.id, std::string(name) + " index " + std::to_string(idx) + " out of range");
    if (!seen.insert(idx).second) invalid(r.id, std::string(name) + " index " + std::to_string(idx) + " repeated");
  }
}

[[noreturn]] void malformed(const std::string& msg) {
  throw FormatError(FormatError::Kind::malformed_metadata, "malformed metadata: " + msg);
}

std::string read_line(std::istream& in) {
  std::string line;
  auto* buf = in.rdbuf();
  if (buf == nullptr) throw FormatError(FormatError::Kind::truncated, "stream has no buffer");
  for (;;) {
    const int c = buf->sbumpc();
    if (c == std::char_traits<char>::eof()) {
      throw FormatError(FormatError::Kind::truncated,
                        "metadata line not terminated (" + std::to_string(line.size()) + " bytes read)");
    }
    if (c == '\n') return line;
    line.push_back(static_cast<char>(c));
    if (line.size() > kMaxMetadataBytes) malformed("metadata line exceeds size limit");
  }
}

/// Reads exactly `n` bytes or throws a truncation error naming `what`.
std::vector<unsigned char> read_exact(std::istream& in, std::uint64_t n, const std::string& what) {
  std::vector<unsigned char> out;
  auto* buf = in.rdbuf();
  std::uint64_t got = 0;
  while (got < n) {
    const auto want = static_cast<std::size_t>(std::min<std::uint64_t>(n - got, kReadChunk));
    out.resize(static_cast<std::size_t>(got) + want);
    const auto r = buf->sgetn(reinterpret_cast<char*>(out.data() + got), static_cast<std::streamsize>(want));
    got += static_cast<std::uint64_t>(std::max<std::streamsize>(r, 0));
    if (static_cast<std::size_t>(r) < want) {
      throw FormatError(FormatError::Kind::truncated, what + ": expected " + std::to_string(n) +
                                                          " bytes, only " + std::to_string(got) + " available");
    }
  }
  return out;
}

template <class T>
T field(const json& meta, const char* key) {
  auto it = meta.find(key);
  if (it == meta.end()) malformed(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    malformed(std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
T field_or(const json& meta, const char* key, T fallback) {
  auto it = meta.find(key);
  if (it == meta.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    malformed(std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
std::optional<T> optional_field(const json& meta, const char* key) {
  auto it = meta.find(key);
  if (it == meta.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    malformed(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

void throw_shape_mismatch(std::size_t size, std::size_t rows, std::size_t dim) {
  throw ValidationError("matrix data length " + std::to_string(size) + " != " + std::to_string(rows) + "x" +
                        std::to_string(dim));
}

void throw_gather_range(std::size_t index, std::size_t rows) {
  throw ValidationError("row index " + std::to_string(index) + " out of range for " + std::to_string(rows) +
                        " rows");
}

std::string ExampleRecord::generation_text() const {
  if (!output_text.empty()) return output_text;
  std::string s;
  for (const auto& t : output_tokens) s += t;
  return s;
}

void validate(const ExampleRecord& r) {
  if (r.input_hidden.rows() != r.prompt_tokens.size()) {
    invalid(r.id, "input_hidden has " + std::to_string(r.input_hidden.rows()) + " rows for " +
                      std::to_string(r.prompt_tokens.size()) + " prompt tokens");
  }
  if (r.output_hidden.rows() != r.output_tokens.size()) {
    invalid(r.id, "output_hidden has " + std::to_string(r.output_hidden.rows()) + " rows for " +
                      std::to_string(r.output_tokens.size()) + " output tokens");
  }
  if (r.input_hidden.dim() == 0 || r.output_hidden.dim() == 0) invalid(r.id, "hidden dimension must be >= 1");
  if (r.input_hidden.dim() != r.output_hidden.dim()) {
    invalid(r.id, "input/output hidden dimensions differ (" + std::to_string(r.input_hidden.dim()) + " vs " +
                      std::to_string(r.output_hidden.dim()) + ")");
  }
  if (r.output_logprobs.size() != r.output_tokens.size()) invalid(r.id, "output_logprobs length != output length");
  for (double lp : r.output_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) invalid(r.id, "output_logprobs must be finite and <= 0");
  }
  for (const auto& t : tensors_of(r)) {
    if (!finite(t.values)) invalid(r.id, "non-finite value in tensor '" + t.name + "'");
  }
  if (r.final_input_logits && r.final_input_logits->empty()) invalid(r.id, "final_input_logits is empty");
  for (std::size_t g = 0; g < r.extra_generations.size(); ++g) {
    const auto& gen = r.extra_generations[g];
    const std::string where = "generation " + std::to_string(g) + ": ";
    if (gen.logprobs.size() != gen.tokens.size()) invalid(r.id, where + "logprobs length != tokens length");
    for (double lp : gen.logprobs) {
      if (!std::isfinite(lp) || lp > 0.0) invalid(r.id, where + "logprobs must be finite and <= 0");
    }
    if (gen.pooled_hidden.size() != r.output_hidden.dim()) {
      invalid(r.id, where + "pooled_hidden length " + std::to_string(gen.pooled_hidden.size()) +
                        " != hidden dimension " + std::to_string(r.output_hidden.dim()));
    }
  }
  check_ranks(r, r.keyword_ranks_input, r.prompt_tokens.size(), "keyword_ranks_input");
  check_ranks(r, r.keyword_ranks_output, r.output_tokens.size(), "keyword_ranks_output");
  if (r.precomputed_similarity &&
      !(std::isfinite(*r.precomputed_similarity) && std::abs(*r.precomputed_similarity) <= 1.0)) {
    invalid(r.id, "precomputed_similarity outside [-1, 1]");
  }
  if (r.num_layers < 0 || r.layer < -1 || (r.num_layers > 0 && r.layer >= r.num_layers)) {
    invalid(r.id, "layer tag " + std::to_string(r.layer) + " inconsistent with num_layers " +
                      std::to_string(r.num_layers));
  }
}

std::size_t write_record(const ExampleRecord& record, std::ostream& sink) {
  validate(record);
  const auto tensors = tensors_of(record);

  std::string block;
  block.append(kBlockMagic, sizeof kBlockMagic);
  put_u32(block, kFormatVersion);
  put_u32(block, static_cast<std::uint32_t>(tensors.size()));

  json layout = json::array();
  for (const auto& t : tensors) {
    layout.push_back({{"name", t.name}, {"offset", block.size()}, {"rows", t.rows}, {"dim", t.dim}});
    put_u32(block, t.rows);
    put_u32(block, t.dim);
    for (float v : t.values) put_u32(block, std::bit_cast<std::uint32_t>(v));
  }

  json gens = json::array();
  for (const auto& g : record.extra_generations) {
    gens.push_back({{"tokens", g.tokens}, {"logprobs", g.logprobs}, {"text", g.text}});
  }
  json meta = {
      {"id", record.id},
      {"version", kFormatVersion},
      {"layer", record.layer},
      {"num_layers", record.num_layers},
      {"prompt_tokens", record.prompt_tokens},
      {"output_tokens", record.output_tokens},
      {"output_text", record.output_text},
      {"output_logprobs", record.output_logprobs},
      {"references", record.references},
      {"precomputed_similarity", record.precomputed_similarity ? json(*record.precomputed_similarity) : json()},
      {"keyword_ranks_input", record.keyword_ranks_input ? json(*record.keyword_ranks_input) : json()},
      {"keyword_ranks_output", record.keyword_ranks_output ? json(*record.keyword_ranks_output) : json()},
      {"extra_generations", gens},
      {"tensors", layout},
      {"block_bytes", block.size()},
  };
  const std::string line = meta.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";

  sink.write(line.data(), static_cast<std::streamsize>(line.size()));
  sink.write(block.data(), static_cast<std::streamsize>(block.size()));
  if (!sink) throw IoError("failed writing record '" + record.id + "'");
  return line.size() + block.size();
}

ExampleRecord read_record(std::istream& source) {
  const std::string line = read_line(source);
  json meta = json::parse(line, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) malformed("metadata line is not a JSON object");

  ExampleRecord r;
  r.id = field<std::string>(meta, "id");
  r.layer = field_or<std::int32_t>(meta, "layer", -1);
  r.num_layers = field_or<std::int32_t>(meta, "num_layers", 0);
  r.prompt_tokens = field<std::vector<std::string>>(meta, "prompt_tokens");
  r.output_tokens = field<std::vector<std::string>>(meta, "output_tokens");
  r.output_text = field_or<std::string>(meta, "output_text", "");
  r.output_logprobs = field<std::vector<double>>(meta, "output_logprobs");
  r.references = field_or<std::vector<std::string>>(meta, "references", {});
  r.precomputed_similarity = optional_field<double>(meta, "precomputed_similarity");
  r.keyword_ranks_input = optional_field<std::vector<std::size_t>>(meta, "keyword_ranks_input");
  r.keyword_ranks_output = optional_field<std::vector<std::size_t>>(meta, "keyword_ranks_output");
  const auto block_bytes = field<std::uint64_t>(meta, "block_bytes");

  const json gens = field_or<json>(meta, "extra_generations", json::array());
  if (!gens.is_array()) malformed("field 'extra_generations' has the wrong type");
  for (const auto& g : gens) {
    if (!g.is_object()) malformed("generation entry is not an object");
    GenerationRecord gen;
    gen.tokens = field<std::vector<std::string>>(g, "tokens");
    gen.logprobs = field<std::vector<double>>(g, "logprobs");
    gen.text = field_or<std::string>(g, "text", "");
    r.extra_generations.push_back(std::move(gen));
  }

  const json layout = field<json>(meta, "tensors");
  if (!layout.is_array()) malformed("field 'tensors' has the wrong type");

  const auto header = read_exact(source, kHeaderBytes, "block header of record '" + r.id + "'");
  if (std::memcmp(header.data(), kBlockMagic, sizeof kBlockMagic) != 0) {
    throw FormatError(FormatError::Kind::magic_mismatch,
                      "record '" + r.id + "': bad block magic '" +
                          std::string(reinterpret_cast<const char*>(header.data()), 4) + "', expected 'HIDE'");
  }
  const std::uint32_t version = get_u32(header.data() + 4);
  if (version == 0 || version > kFormatVersion) {
    throw FormatError(FormatError::Kind::unsupported_version,
                      "record '" + r.id + "': unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(header.data() + 8);
  if (count != layout.size()) {
    throw FormatError(FormatError::Kind::inconsistent, "record '" + r.id + "': block holds " + std::to_string(count) +
                                                           " tensors, metadata lists " +
                                                           std::to_string(layout.size()));
  }

  std::uint64_t offset = kHeaderBytes;
  std::size_t next_generation = 0;
  for (const auto& entry : layout) {
    if (!entry.is_object()) malformed("tensor entry is not an object");
    const auto name = field<std::string>(entry, "name");
    const auto declared_offset = field<std::uint64_t>(entry, "offset");
    const auto declared_rows = field<std::uint32_t>(entry, "rows");
    const auto declared_dim = field<std::uint32_t>(entry, "dim");
    if (declared_offset != offset) {
      throw FormatError(FormatError::Kind::inconsistent, "tensor '" + name + "': offset " +
                                                             std::to_string(declared_offset) + " != " +
                                                             std::to_string(offset));
    }
    const auto shape = read_exact(source, kShapeBytes, "shape header of tensor '" + name + "'");
    const std::uint32_t rows = get_u32(shape.data());
    const std::uint32_t dim = get_u32(shape.data() + 4);
    if (rows != declared_rows || dim != declared_dim) {
      throw FormatError(FormatError::Kind::inconsistent, "tensor '" + name + "': header shape " +
                                                             std::to_string(rows) + "x" + std::to_string(dim) +
                                                             " disagrees with metadata");
    }
    const std::uint64_t count_values = static_cast<std::uint64_t>(rows) * dim;
    if (count_values > block_bytes / 4 || offset + kShapeBytes + count_values * 4 > block_bytes) {
      throw FormatError(FormatError::Kind::inconsistent, "tensor '" + name + "' (" + std::to_string(rows) + "x" +
                                                             std::to_string(dim) + ") overruns the " +
                                                             std::to_string(block_bytes) + "-byte block");
    }
    const auto payload = read_exact(source, count_values * 4, "tensor '" + name + "' (" + std::to_string(rows) +
                                                                  "x" + std::to_string(dim) + ")");
    std::vector<float> values(static_cast<std::size_t>(count_values));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(get_u32(payload.data() + 4 * i));
    offset += kShapeBytes + count_values * 4;

    if (name == "input_hidden") {
      r.input_hidden = HiddenMatrix(rows, dim, std::move(values));
    } else if (name == "output_hidden") {
      r.output_hidden = HiddenMatrix(rows, dim, std::move(values));
    } else if (name == "final_input_logits") {
      if (rows != 1) throw FormatError(FormatError::Kind::inconsistent, "final_input_logits must have one row");
      r.final_input_logits = std::move(values);
    } else if (name == "generation." + std::to_string(next_generation) + ".pooled_hidden") {
      if (rows != 1 || next_generation >= r.extra_generations.size()) {
        throw FormatError(FormatError::Kind::inconsistent, "unexpected tensor '" + name + "'");
      }
      r.extra_generations[next_generation++].pooled_hidden = std::move(values);
    } else {
      throw FormatError(FormatError::Kind::inconsistent, "unknown tensor '" + name + "'");
    }
  }
  if (offset != block_bytes) {
    throw FormatError(FormatError::Kind::inconsistent, "record '" + r.id + "': block is " + std::to_string(offset) +
                                                           " bytes, metadata says " + std::to_string(block_bytes));
  }
  if (next_generation != r.extra_generations.size()) {
    throw FormatError(FormatError::Kind::inconsistent, "record '" + r.id + "': missing pooled_hidden tensors");
  }
  validate(r);
  return r;
}

std::optional<ExampleRecord> ContainerReader::next() {
  auto* buf = source_.rdbuf();
  if (buf == nullptr || buf->sgetc() == std::char_traits<char>::eof()) return std::nullopt;
  ++count_;
  return read_record(source_);
}

std::vector<ExampleRecord> read_all(std::istream& source) {
  std::vector<ExampleRecord> out;
  ContainerReader reader(source);
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

std::vector<std::filesystem::path> container_files(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == kContainerExtension) out.push_back(entry.path());
    }
    if (ec) throw IoError("cannot list directory '" + path.string() + "': " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
  }
  if (!fs::exists(path, ec)) throw IoError("no such file or directory: '" + path.string() + "'");
  return {path};
}

void write_container(const std::filesystem::path& path, std::span<const ExampleRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) write_record(r, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace hide
