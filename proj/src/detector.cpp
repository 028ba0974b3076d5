#include "hide/detector.hpp"

#include <cmath>

#include "hide/baselines.hpp"
#include "hide/error.hpp"

namespace hide {

std::string_view to_string(SingleTokenFallback fallback) {
  switch (fallback) {
    case SingleTokenFallback::report_zero:
      return "report_zero";
    case SingleTokenFallback::fallback_perplexity:
      return "fallback_perplexity";
  }
  return "unknown";
}

std::optional<SingleTokenFallback> parse_single_token_fallback(std::string_view name) {
  if (name == "report_zero") return SingleTokenFallback::report_zero;
  if (name == "fallback_perplexity") return SingleTokenFallback::fallback_perplexity;
  return std::nullopt;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::hallucination:
      return "hallucination";
    case Verdict::non_hallucination:
      return "non_hallucination";
    case Verdict::undetermined:
      return "undetermined";
  }
  return "unknown";
}

void DetectorConfig::validate() const {
  kernel.validate();
  alignment.validate();
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("threshold tau must be a finite value >= 0");
  if (layer) {
    if (const auto* idx = std::get_if<std::int32_t>(&*layer); idx && *idx < 0) {
      throw ConfigError("layer index must be >= 0");
    }
  }
  if (fallback_mnll_threshold && !std::isfinite(*fallback_mnll_threshold)) {
    throw ConfigError("fallback MNLL threshold must be finite");
  }
}

void check_layer(const ExampleRecord& record, const DetectorConfig& config) {
  if (!config.layer) return;
  std::int32_t wanted = 0;
  if (const auto* idx = std::get_if<std::int32_t>(&*config.layer)) {
    wanted = *idx;
  } else {
    if (record.num_layers <= 0) {
      throw ConfigError("record " + record.id + ": layer 'mid' requested but the model depth is unknown");
    }
    wanted = record.num_layers / 2;
  }
  if (record.layer != wanted) {
    throw ConfigError("record " + record.id + ": holds layer " + std::to_string(record.layer) +
                      " but layer " + std::to_string(wanted) + " was requested");
  }
}

std::optional<ScoreResult> hide_score(const ExampleRecord& record, const DetectorConfig& config) {
  check_layer(record, config);
  const auto aligned = align(record, config.alignment);
  if (!aligned) return std::nullopt;
  if (aligned->n_eff < min_sample_size(config.estimator)) {
    throw UnsupportedSampleSize("record " + record.id + ": estimator " + std::string(to_string(config.estimator)) +
                                " needs n_eff >= " + std::to_string(min_sample_size(config.estimator)) + ", got " +
                                std::to_string(aligned->n_eff));
  }
  return ScoreResult{hsic(config.estimator, config.kernel, aligned->x, aligned->y), aligned->n_eff};
}

Verdict decide(double score, double tau) noexcept {
  return score < tau ? Verdict::hallucination : Verdict::non_hallucination;
}

Decision detect(const ExampleRecord& record, const DetectorConfig& config) {
  Decision d;
  const auto scored = hide_score(record, config);
  if (!scored) return d;
  d.score = scored->score;
  d.n_eff_used = scored->n_eff;
  if (scored->n_eff == 1 && config.single_token_fallback == SingleTokenFallback::fallback_perplexity) {
    if (record.output_logprobs.empty() || record.output_logprobs.size() != record.output_tokens.size()) {
      throw ValidationError("record " + record.id + ": perplexity fallback needs output logprobs");
    }
    if (!config.fallback_mnll_threshold) {
      throw ConfigError("perplexity fallback engaged but no fallback MNLL threshold is configured");
    }
    d.fallback_used = true;
    d.verdict = mnll(record) > *config.fallback_mnll_threshold ? Verdict::hallucination : Verdict::non_hallucination;
    return d;
  }
  d.verdict = decide(d.score, config.tau);
  return d;
}

}  // namespace hide
