#pragma once

// On-disk example records shared between the extraction adapter and the
// scoring core. Byte layout is documented in FORMAT.md (version 1).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hide {

inline constexpr char kBlockMagic[4] = {'H', 'I', 'D', 'E'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr const char* kContainerExtension = ".hiderec";

[[noreturn]] void throw_shape_mismatch(std::size_t size, std::size_t rows, std::size_t dim);
[[noreturn]] void throw_gather_range(std::size_t index, std::size_t rows);

/// Dense row-major matrix; rows are samples.
template <class T>
class RowMatrix {
 public:
  RowMatrix() = default;
  RowMatrix(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, T{}) {}
  RowMatrix(std::size_t rows, std::size_t dim, std::vector<T> data)
      : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows * dim) throw_shape_mismatch(data_.size(), rows, dim);
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const T> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<T> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  T operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }

  const std::vector<T>& data() const noexcept { return data_; }

  /// Copies the listed rows, in order, into a new matrix of element type U.
  template <class U = T>
  RowMatrix<U> gather(std::span<const std::size_t> indices) const {
    std::vector<U> out;
    out.reserve(indices.size() * dim_);
    for (std::size_t idx : indices) {
      if (idx >= rows_) throw_gather_range(idx, rows_);
      for (T v : row(idx)) out.push_back(static_cast<U>(v));
    }
    return RowMatrix<U>(indices.size(), dim_, std::move(out));
  }

  bool all_finite() const noexcept {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const RowMatrix&, const RowMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

/// Per-token hidden states at one layer (32-bit, as stored on disk).
using HiddenMatrix = RowMatrix<float>;
/// Aligned samples fed to the estimators.
using SampleMatrix = RowMatrix<double>;

struct GenerationRecord {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::vector<float> pooled_hidden;
  std::string text;

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

struct ExampleRecord {
  std::string id;
  std::vector<std::string> prompt_tokens;
  std::vector<std::string> output_tokens;
  /// Detokenized greedy output; when empty the tokens are concatenated.
  std::string output_text;
  HiddenMatrix input_hidden;
  HiddenMatrix output_hidden;
  std::vector<double> output_logprobs;
  std::optional<std::vector<float>> final_input_logits;
  std::vector<GenerationRecord> extra_generations;
  std::vector<std::string> references;
  std::optional<double> precomputed_similarity;
  std::optional<std::vector<std::size_t>> keyword_ranks_input;
  std::optional<std::vector<std::size_t>> keyword_ranks_output;
  /// Layer the hidden states were dumped from, and the model depth.
  std::int32_t layer = -1;
  std::int32_t num_layers = 0;

  /// Generation text used for correctness labeling.
  std::string generation_text() const;

  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

/// Throws ValidationError naming the first broken invariant.
void validate(const ExampleRecord& record);

/// Serializes one record: a metadata line followed by its tensor block.
/// Returns the number of bytes written.
std::size_t write_record(const ExampleRecord& record, std::ostream& sink);

/// Reads the next record. Throws FormatError on framing problems and
/// ValidationError when a well-framed record breaks an invariant (the
/// stream is then positioned after the record).
ExampleRecord read_record(std::istream& source);

/// Sequential reader over a stream holding concatenated records.
class ContainerReader {
 public:
  explicit ContainerReader(std::istream& source) : source_(source) {}

  /// Empty at clean end of stream.
  std::optional<ExampleRecord> next();

  std::size_t records_read() const noexcept { return count_; }

 private:
  std::istream& source_;
  std::size_t count_ = 0;
};

std::vector<ExampleRecord> read_all(std::istream& source);

/// Container files for a path: the file itself, or every `.hiderec` in a
/// directory sorted by name.
std::vector<std::filesystem::path> container_files(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path, std::span<const ExampleRecord> records);

}  // namespace hide
