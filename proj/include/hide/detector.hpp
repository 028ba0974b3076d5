#pragma once

// Layer check, alignment, dependence score and thresholded verdict.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>

#include "hide/alignment.hpp"
#include "hide/hsic.hpp"
#include "hide/kernels.hpp"
#include "hide/tensor_io.hpp"

namespace hide {

inline constexpr double kDefaultTau = 0.12;

/// Layer the caller expects the container to hold: an index, or the
/// middle layer floor(L/2) of the dumping model.
struct MidLayer {
  friend bool operator==(MidLayer, MidLayer) = default;
};
using LayerSelector = std::variant<std::int32_t, MidLayer>;

enum class SingleTokenFallback { report_zero, fallback_perplexity };

std::string_view to_string(SingleTokenFallback fallback);
std::optional<SingleTokenFallback> parse_single_token_fallback(std::string_view name);

struct DetectorConfig {
  KernelSpec kernel;
  AlignmentSpec alignment;
  HsicVariant estimator = HsicVariant::hide;
  double tau = kDefaultTau;
  /// Empty: accept whatever layer the container holds.
  std::optional<LayerSelector> layer;
  SingleTokenFallback single_token_fallback = SingleTokenFallback::report_zero;
  /// MNLL above this is a hallucination when the fallback engages.
  std::optional<double> fallback_mnll_threshold;

  void validate() const;
};

enum class Verdict { hallucination, non_hallucination, undetermined };

std::string_view to_string(Verdict verdict);

struct Decision {
  double score = 0.0;
  Verdict verdict = Verdict::undetermined;
  std::size_t n_eff_used = 0;
  bool fallback_used = false;
};

struct ScoreResult {
  double score;
  std::size_t n_eff;
};

/// Throws ConfigError when the record's layer tag does not match.
void check_layer(const ExampleRecord& record, const DetectorConfig& config);

/// Empty when n_eff < 1. When n_eff is below the estimator's minimum
/// sample size the variant's UnsupportedSampleSize error propagates.
std::optional<ScoreResult> hide_score(const ExampleRecord& record, const DetectorConfig& config);

/// Thresholds a score: hallucination iff score < tau.
Verdict decide(double score, double tau) noexcept;

Decision detect(const ExampleRecord& record, const DetectorConfig& config);

}  // namespace hide
