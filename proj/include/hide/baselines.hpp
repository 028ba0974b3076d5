#pragma once

// Comparison detectors computed from logprobs, logits, multiple
// generations and pooled embeddings.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hide/tensor_io.hpp"

namespace hide {

inline constexpr double kDefaultEnergyTemperature = 1.0;
inline constexpr double kDefaultEigenAlpha = 1e-3;

/// Mean negative log-likelihood of the greedy output.
double mnll(const ExampleRecord& record);
double mnll(std::span<const double> logprobs);

/// -T log sum exp(logit / T) over the final-input-position logits.
double energy(std::span<const float> logits, double temperature = kDefaultEnergyTemperature);
double energy(const ExampleRecord& record, double temperature = kDefaultEnergyTemperature);

/// Mean of per-generation MNLL over the primary output and the extras.
double ln_entropy(const ExampleRecord& record);

/// LCS F-measure with P = lcs/|b|, R = lcs/|a|; 0 when either is empty.
double rouge_l(std::span<const std::string> a, std::span<const std::string> b);

/// Mean pairwise rouge_l over all unordered generation pairs.
double lexical_similarity(const ExampleRecord& record);
double lexical_similarity(std::span<const std::vector<std::string>> generations);

struct EigenScoreResult {
  double score;
  /// Eigenvalues of Sigma + alpha I that were clamped to alpha.
  std::size_t clamped;
};

/// z holds one pooled embedding per generation (all of length d).
/// Sigma = Z' C_d Z with C_d = I - 11'/d; returns (1/N) sum log eig(Sigma + alpha I).
EigenScoreResult eigenscore(std::span<const std::vector<double>> z, double alpha = kDefaultEigenAlpha);

/// Primary generation pooled as the mean of output_hidden rows.
EigenScoreResult eigenscore(const ExampleRecord& record, double alpha = kDefaultEigenAlpha);

/// Pooled embeddings of every generation in record order (primary first).
std::vector<std::vector<double>> pooled_embeddings(const ExampleRecord& record);

struct BaselineScores {
  std::optional<double> mnll;
  std::optional<double> energy;
  std::optional<double> ln_entropy;
  std::optional<double> lexical_similarity;
  std::optional<double> eigenscore;
  std::size_t eigenscore_clamped = 0;
};

/// Every baseline computable for the record; unavailable ones stay empty.
BaselineScores compute_baselines(const ExampleRecord& record, double temperature = kDefaultEnergyTemperature,
                                 double alpha = kDefaultEigenAlpha);

/// Native direction of a named score.
enum class Orientation { higher_is_correct, higher_is_hallucination };

/// Known names: hide, biased, unbiased, mnll, energy, ln_entropy,
/// lexical_similarity, eigenscore.
std::optional<Orientation> score_orientation(std::string_view name);

/// Flips hallucination-oriented scores so higher always means correct.
double orient(Orientation orientation, double value) noexcept;

}  // namespace hide
