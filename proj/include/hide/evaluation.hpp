#pragma once

// Correctness labels, ranking metrics, threshold calibration and the
// synthetic coupled/decoupled benchmark.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hide/tensor_io.hpp"

namespace hide {

enum class CorrectnessMeasure { exact_match, rouge_l_threshold, similarity_threshold };

inline constexpr double kRougeCutoff = 0.5;
inline constexpr double kSimilarityCutoff = 0.9;

std::string_view to_string(CorrectnessMeasure measure);
/// Accepts exact / rouge / sim and the long names.
std::optional<CorrectnessMeasure> parse_correctness_measure(std::string_view name);

/// Lowercase, punctuation removed, leading article (a, an, the) dropped,
/// whitespace collapsed.
std::string normalize_answer(std::string_view text);

/// Lowercase, punctuation removed, split on whitespace.
std::vector<std::string> rouge_tokens(std::string_view text);

bool label(const ExampleRecord& record, CorrectnessMeasure measure);

/// Probability that a random correct example outscores a random incorrect
/// one, ties counted 1/2. Scores must be oriented (higher = correct).
double auc_roc(std::span<const double> scores, const std::vector<bool>& labels);

/// Point-biserial Pearson correlation against 0/1 labels.
double pcc(std::span<const double> scores, const std::vector<bool>& labels);

struct ThresholdPoint {
  double tau;
  double tpr;  // P(score >= tau | correct)
  double fpr;  // P(score >= tau | incorrect)
  double gmean;
};

struct Calibration {
  double tau_star;
  double gmean;
  /// Every candidate threshold in increasing order.
  std::vector<ThresholdPoint> sweep;
};

/// Maximizes sqrt(TPR (1 - FPR)) over -inf, the midpoints between distinct
/// sorted scores, and +inf. Ties go to the smallest threshold.
Calibration calibrate_threshold(std::span<const double> scores, const std::vector<bool>& labels);

struct ScoredExample {
  /// Oriented score; empty for undetermined examples.
  std::optional<double> score;
  bool correct;
};

struct EvalReport {
  double auc = 0.0;
  double pcc = 0.0;
  double tau_star = 0.0;
  double gmean_at_tau = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t undetermined = 0;
  /// AUC with undetermined examples ranked below every scored one.
  std::optional<double> auc_with_undetermined;
};

/// Undetermined examples are counted but excluded from every metric.
EvalReport evaluate(std::span<const ScoredExample> examples);

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t pairs = 500;
  std::size_t dim = 64;
  std::size_t tokens = 30;
  double noise = 0.1;
};

/// 2 * pairs records, a coupled then a decoupled one per pair.
/// Input rows are drawn around 2 to 6 random topic centroids.
/// Coupled: output rows are a rotated, shuffled copy of the input rows plus
/// noise * rms(input) Gaussian noise; labeled correct.
/// Decoupled: a fresh input; output rows i.i.d. Gaussian with that input's
/// rms; labeled incorrect.
std::vector<ExampleRecord> make_synthetic_benchmark(const SyntheticOptions& options);

}  // namespace hide
