#include "hide/alignment.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "hide/error.hpp"

namespace hide {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, double na, std::span<const double> b, double nb) {
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot / (na * nb);
}

std::vector<std::size_t> ranks_to_indices(const std::optional<std::vector<std::size_t>>& ranks, const HiddenMatrix& h,
                                          std::span<const std::string> tokens, std::size_t n_eff,
                                          const AlignmentSpec& spec, std::string_view side) {
  if (!ranks) {
    if (!spec.allow_fallback) {
      throw ConfigError("external_keywords alignment: record has no " + std::string(side) +
                        " keyword ranks and fallback is disabled");
    }
    return select_keywords_mmr(h, tokens, n_eff, spec.mmr_lambda);
  }
  const std::size_t take = ranks->size() < n_eff ? ranks->size() : n_eff;
  std::vector<std::size_t> head(ranks->begin(), ranks->begin() + static_cast<std::ptrdiff_t>(take));
  if (head.size() == n_eff) return head;
  return select_keywords_mmr(h, tokens, n_eff, spec.mmr_lambda, head);
}

}  // namespace

std::string_view to_string(AlignmentStrategy strategy) {
  switch (strategy) {
    case AlignmentStrategy::keyword_mmr:
      return "keyword_mmr";
    case AlignmentStrategy::external_keywords:
      return "external_keywords";
    case AlignmentStrategy::svd:
      return "svd";
  }
  return "unknown";
}

std::optional<AlignmentStrategy> parse_alignment_strategy(std::string_view name) {
  if (name == "keyword_mmr" || name == "keyword") return AlignmentStrategy::keyword_mmr;
  if (name == "external_keywords" || name == "external") return AlignmentStrategy::external_keywords;
  if (name == "svd") return AlignmentStrategy::svd;
  return std::nullopt;
}

void AlignmentSpec::validate() const {
  if (token_budget < 1) throw ConfigError("token budget must be >= 1");
  if (!(mmr_lambda >= 0.0 && mmr_lambda <= 1.0)) throw ConfigError("mmr lambda must lie in [0, 1]");
}

std::vector<std::size_t> select_keywords_mmr(const HiddenMatrix& h, std::span<const std::string> tokens, std::size_t k,
                                             double lambda, std::span<const std::size_t> preselected) {
  const std::size_t n = h.rows();
  if (tokens.size() != n) {
    throw ValidationError("mmr: " + std::to_string(tokens.size()) + " tokens for " + std::to_string(n) +
                          " hidden rows");
  }
  if (n == 0) throw ValidationError("mmr: no tokens to select from");
  if (k > n) throw ValidationError("mmr: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " rows");

  const SampleMatrix rows(n, h.dim(), std::vector<double>(h.data().begin(), h.data().end()));
  std::vector<double> mean(h.dim(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h.dim(); ++j) mean[j] += rows(i, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  const double mean_norm = norm(mean);

  std::vector<double> norms(n);
  std::vector<double> relevance(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm(rows.row(i));
    relevance[i] = cosine(rows.row(i), norms[i], mean, mean_norm);
  }

  std::vector<bool> taken(n, false);
  // Running max cosine to the selected set; -inf until something is selected.
  std::vector<double> redundancy(n, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> order;
  order.reserve(k);

  auto take = [&](std::size_t pick) {
    taken[pick] = true;
    order.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double c = cosine(rows.row(i), norms[i], rows.row(pick), norms[pick]);
      if (c > redundancy[i]) redundancy[i] = c;
    }
  };

  for (std::size_t idx : preselected) {
    if (idx >= n) throw ValidationError("mmr: preselected index " + std::to_string(idx) + " out of range");
    if (taken[idx]) throw ValidationError("mmr: duplicate preselected index " + std::to_string(idx));
    if (order.size() == k) break;
    take(idx);
  }

  while (order.size() < k) {
    std::size_t best = n;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double diversity = order.empty() ? 0.0 : redundancy[i];
      const double score = lambda * relevance[i] - (1.0 - lambda) * diversity;
      if (best == n || score > best_score) {
        best = i;
        best_score = score;
      }
    }
    take(best);
  }
  return order;
}

std::optional<AlignedSamples> align_keyword(const ExampleRecord& record, const AlignmentSpec& spec) {
  spec.validate();
  const std::size_t n_eff =
      effective_budget(spec.token_budget, record.input_hidden.rows(), record.output_hidden.rows());
  if (n_eff < 1) return std::nullopt;

  std::vector<std::size_t> in_idx;
  std::vector<std::size_t> out_idx;
  switch (spec.strategy) {
    case AlignmentStrategy::keyword_mmr:
      in_idx = select_keywords_mmr(record.input_hidden, record.prompt_tokens, n_eff, spec.mmr_lambda);
      out_idx = select_keywords_mmr(record.output_hidden, record.output_tokens, n_eff, spec.mmr_lambda);
      break;
    case AlignmentStrategy::external_keywords:
      in_idx = ranks_to_indices(record.keyword_ranks_input, record.input_hidden, record.prompt_tokens, n_eff, spec,
                                "input");
      out_idx = ranks_to_indices(record.keyword_ranks_output, record.output_hidden, record.output_tokens, n_eff, spec,
                                 "output");
      break;
    case AlignmentStrategy::svd:
      throw ConfigError("align_keyword called with the svd strategy");
  }

  AlignedSamples out;
  out.x = record.input_hidden.gather<double>(in_idx);
  out.y = record.output_hidden.gather<double>(out_idx);
  out.n_eff = n_eff;
  out.selected_input_indices = std::move(in_idx);
  out.selected_output_indices = std::move(out_idx);
  return out;
}

SampleMatrix svd_rows(const HiddenMatrix& h, std::size_t k) {
  const std::size_t rows = h.rows();
  const std::size_t dim = h.dim();
  SampleMatrix out(k, dim);
  if (rows == 0 || dim == 0 || k == 0) return out;

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h(i, j);
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw ValidationError("svd did not converge");
  const auto& sigma = svd.singularValues();
  const auto& v = svd.matrixV();

  const std::size_t rank_bound = static_cast<std::size_t>(sigma.size());
  for (std::size_t r = 0; r < k && r < rank_bound; ++r) {
    const double s = sigma(static_cast<Eigen::Index>(r));
    auto dst = out.row(r);
    std::size_t arg = 0;
    double big = -1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      dst[j] = s * v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r));
      if (std::abs(dst[j]) > big) {
        big = std::abs(dst[j]);
        arg = j;
      }
    }
    if (dst[arg] < 0.0) {
      for (double& x : dst) x = -x;
    }
    // Avoid -0.0 so zero rows compare equal bitwise.
    for (double& x : dst) x += 0.0;
  }
  return out;
}

std::optional<AlignedSamples> align_svd(const ExampleRecord& record, const AlignmentSpec& spec) {
  spec.validate();
  const std::size_t n_eff =
      effective_budget(spec.token_budget, record.input_hidden.rows(), record.output_hidden.rows());
  if (n_eff < 1) return std::nullopt;
  AlignedSamples out;
  out.x = svd_rows(record.input_hidden, n_eff);
  out.y = svd_rows(record.output_hidden, n_eff);
  out.n_eff = n_eff;
  return out;
}

std::optional<AlignedSamples> align(const ExampleRecord& record, const AlignmentSpec& spec) {
  if (spec.strategy == AlignmentStrategy::svd) return align_svd(record, spec);
  return align_keyword(record, spec);
}

}  // namespace hide
