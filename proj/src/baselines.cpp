#include "hide/baselines.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "hide/error.hpp"

namespace hide {

namespace {

std::vector<std::vector<std::string>> all_token_lists(const ExampleRecord& record) {
  std::vector<std::vector<std::string>> out;
  out.reserve(record.extra_generations.size() + 1);
  out.push_back(record.output_tokens);
  for (const auto& g : record.extra_generations) out.push_back(g.tokens);
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double mnll(std::span<const double> logprobs) {
  if (logprobs.empty()) throw ValidationError("mnll of an empty output");
  double s = 0.0;
  for (double lp : logprobs) s += lp;
  return -s / static_cast<double>(logprobs.size());
}

double mnll(const ExampleRecord& record) {
  if (record.output_logprobs.size() != record.output_tokens.size()) {
    throw ValidationError("mnll: output logprobs incomplete");
  }
  return mnll(record.output_logprobs);
}

double energy(std::span<const float> logits, double temperature) {
  if (logits.empty()) throw ValidationError("energy of an empty logit vector");
  if (!(temperature > 0.0)) throw ConfigError("energy temperature must be positive");
  double m = logits[0];
  for (float l : logits) m = std::max(m, static_cast<double>(l));
  double s = 0.0;
  for (float l : logits) s += std::exp((static_cast<double>(l) - m) / temperature);
  return -temperature * (m / temperature + std::log(s));
}

double energy(const ExampleRecord& record, double temperature) {
  if (!record.final_input_logits) throw ValidationError("energy: record has no final input logits");
  return energy(*record.final_input_logits, temperature);
}

double ln_entropy(const ExampleRecord& record) {
  if (record.extra_generations.empty()) throw ValidationError("ln_entropy needs at least two generations");
  if (record.output_tokens.empty()) throw ValidationError("ln_entropy: primary generation is empty");
  double total = mnll(record);
  for (std::size_t k = 0; k < record.extra_generations.size(); ++k) {
    const auto& g = record.extra_generations[k];
    if (g.tokens.empty()) throw ValidationError("ln_entropy: generation " + std::to_string(k + 1) + " is empty");
    total += mnll(g.logprobs);
  }
  return total / static_cast<double>(record.extra_generations.size() + 1);
}

double rouge_l(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(a, b));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(b.size());
  const double r = lcs / static_cast<double>(a.size());
  return 2.0 * p * r / (p + r);
}

double lexical_similarity(std::span<const std::vector<std::string>> generations) {
  const std::size_t n = generations.size();
  if (n < 2) throw ValidationError("lexical similarity needs at least two generations");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s += rouge_l(generations[i], generations[j]);
  }
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double lexical_similarity(const ExampleRecord& record) {
  const auto lists = all_token_lists(record);
  return lexical_similarity(lists);
}

EigenScoreResult eigenscore(std::span<const std::vector<double>> z, double alpha) {
  const std::size_t n = z.size();
  if (n < 2) throw ValidationError("eigenscore needs at least two generations");
  if (!(alpha > 0.0)) throw ConfigError("eigenscore alpha must be positive");
  const std::size_t d = z[0].size();
  if (d == 0) throw ValidationError("eigenscore: empty embeddings");
  for (const auto& col : z) {
    if (col.size() != d) throw ValidationError("eigenscore: embeddings differ in length");
  }

  // Centering each column over its d entries, then Sigma = Zc' Zc.
  Eigen::MatrixXd zc(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0;
    for (double v : z[c]) mean += v;
    mean /= static_cast<double>(d);
    for (std::size_t r = 0; r < d; ++r) zc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = z[c][r] - mean;
  }
  Eigen::MatrixXd sigma = zc.transpose() * zc;
  sigma.diagonal().array() += alpha;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw ValidationError("eigenscore: eigensolver failed");
  EigenScoreResult out{0.0, 0};
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    double lambda = eig.eigenvalues()(i);
    if (!(lambda > 0.0)) {
      lambda = alpha;
      ++out.clamped;
    }
    out.score += std::log(lambda);
  }
  out.score /= static_cast<double>(n);
  return out;
}

std::vector<std::vector<double>> pooled_embeddings(const ExampleRecord& record) {
  std::vector<std::vector<double>> out;
  const std::size_t d = record.output_hidden.dim();
  std::vector<double> primary(d, 0.0);
  const std::size_t rows = record.output_hidden.rows();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) primary[j] += record.output_hidden(i, j);
  }
  if (rows > 0) {
    for (double& v : primary) v /= static_cast<double>(rows);
  }
  out.push_back(std::move(primary));
  for (const auto& g : record.extra_generations) out.emplace_back(g.pooled_hidden.begin(), g.pooled_hidden.end());
  return out;
}

EigenScoreResult eigenscore(const ExampleRecord& record, double alpha) {
  const auto z = pooled_embeddings(record);
  return eigenscore(z, alpha);
}

BaselineScores compute_baselines(const ExampleRecord& record, double temperature, double alpha) {
  BaselineScores out;
  if (!record.output_tokens.empty()) out.mnll = mnll(record);
  if (record.final_input_logits && !record.final_input_logits->empty()) {
    out.energy = energy(*record.final_input_logits, temperature);
  }
  if (!record.extra_generations.empty()) {
    out.lexical_similarity = lexical_similarity(record);
    const bool all_nonempty =
        !record.output_tokens.empty() &&
        std::all_of(record.extra_generations.begin(), record.extra_generations.end(),
                    [](const GenerationRecord& g) { return !g.tokens.empty(); });
    if (all_nonempty) out.ln_entropy = ln_entropy(record);
    if (record.output_hidden.dim() > 0) {
      const auto es = eigenscore(record, alpha);
      out.eigenscore = es.score;
      out.eigenscore_clamped = es.clamped;
    }
  }
  return out;
}

std::optional<Orientation> score_orientation(std::string_view name) {
  if (name == "hide" || name == "biased" || name == "unbiased" || name == "lexical_similarity") {
    return Orientation::higher_is_correct;
  }
  if (name == "mnll" || name == "energy" || name == "ln_entropy" || name == "eigenscore") {
    return Orientation::higher_is_hallucination;
  }
  return std::nullopt;
}

double orient(Orientation orientation, double value) noexcept {
  return orientation == Orientation::higher_is_correct ? value : -value;
}

}  // namespace hide
