#pragma once

// Equal-size sample sets from input and output hidden states.
//
// keyword_mmr        greedy maximal-marginal-relevance over token hidden
//                    vectors, run independently on input and output
// external_keywords  precomputed token-index ranks stored in the record,
//                    topped up with MMR when they cover fewer than n_eff rows
// svd                rows sigma_k v_k' of the top n_eff right singular
//                    directions of each hidden matrix

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hide/tensor_io.hpp"

namespace hide {

enum class AlignmentStrategy { keyword_mmr, external_keywords, svd };

std::string_view to_string(AlignmentStrategy strategy);
/// Accepts the long names and the CLI short forms keyword / external.
std::optional<AlignmentStrategy> parse_alignment_strategy(std::string_view name);

inline constexpr std::size_t kDefaultTokenBudget = 20;

struct AlignmentSpec {
  AlignmentStrategy strategy = AlignmentStrategy::keyword_mmr;
  std::size_t token_budget = kDefaultTokenBudget;
  double mmr_lambda = 0.5;
  /// Under external_keywords, fall back to MMR when a record has no ranks.
  bool allow_fallback = true;

  void validate() const;

  friend bool operator==(const AlignmentSpec&, const AlignmentSpec&) = default;
};

struct AlignedSamples {
  SampleMatrix x;
  SampleMatrix y;
  std::size_t n_eff = 0;
  /// Source token indices; absent for svd.
  std::optional<std::vector<std::size_t>> selected_input_indices;
  std::optional<std::vector<std::size_t>> selected_output_indices;
};

/// min(budget, input_len, output_len); 0 means undetermined.
constexpr std::size_t effective_budget(std::size_t budget, std::size_t input_len, std::size_t output_len) noexcept {
  std::size_t m = budget < input_len ? budget : input_len;
  return m < output_len ? m : output_len;
}

/// Greedy MMR. Returns k distinct row indices in selection order.
/// Score of row i: lambda * cos(h_i, mean) - (1 - lambda) * max_j cos(h_i, h_j)
/// over already selected j (0 before the first pick). Ties go to the lowest
/// index. Rows listed in `preselected` count as selected and are returned
/// first.
std::vector<std::size_t> select_keywords_mmr(const HiddenMatrix& h, std::span<const std::string> tokens, std::size_t k,
                                             double lambda, std::span<const std::size_t> preselected = {});

/// Keyword alignment (keyword_mmr or external_keywords). Empty when
/// n_eff < 1.
std::optional<AlignedSamples> align_keyword(const ExampleRecord& record, const AlignmentSpec& spec);

/// Truncated SVD alignment. Empty when n_eff < 1. When n_eff exceeds
/// the rank bound min(rows, d) the extra rows are zero.
std::optional<AlignedSamples> align_svd(const ExampleRecord& record, const AlignmentSpec& spec);

/// The top-k rows of Sigma V' for one matrix, sign-canonicalized so the
/// largest-magnitude entry of each row is non-negative.
SampleMatrix svd_rows(const HiddenMatrix& h, std::size_t k);

/// Dispatches on spec.strategy.
std::optional<AlignedSamples> align(const ExampleRecord& record, const AlignmentSpec& spec);

}  // namespace hide
