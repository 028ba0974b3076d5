#pragma once

// Random generators shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hide/tensor_io.hpp"

namespace hide::testing {

using Rng = std::mt19937_64;

inline double normal(Rng& rng) { return std::normal_distribution<double>{}(rng); }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>{lo, hi}(rng); }

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>{lo, hi}(rng);
}

inline SampleMatrix gaussian_samples(Rng& rng, std::size_t rows, std::size_t dim, double scale = 1.0) {
  SampleMatrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = scale * normal(rng);
  }
  return m;
}

inline HiddenMatrix gaussian_hidden(Rng& rng, std::size_t rows, std::size_t dim, double scale = 1.0) {
  HiddenMatrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = static_cast<float>(scale * normal(rng));
  }
  return m;
}

inline SampleMatrix to_samples(const HiddenMatrix& h) {
  return SampleMatrix(h.rows(), h.dim(), std::vector<double>(h.data().begin(), h.data().end()));
}

inline std::vector<std::string> random_tokens(Rng& rng, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("tok" + std::to_string(uniform_int(rng, 0, 50)));
  return out;
}

inline std::vector<double> random_logprobs(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = -uniform(rng, 0.0, 5.0);
  return out;
}

/// Valid record with every optional field exercised at random.
inline ExampleRecord random_record(Rng& rng, std::size_t index) {
  ExampleRecord r;
  r.id = "rec-" + std::to_string(index);
  const std::size_t d = uniform_int(rng, 1, 12);
  const std::size_t in_len = uniform_int(rng, 0, 9);
  const std::size_t out_len = uniform_int(rng, 0, 9);
  r.prompt_tokens = random_tokens(rng, in_len);
  r.output_tokens = random_tokens(rng, out_len);
  r.output_text = index % 3 == 0 ? "" : "text with \"quotes\", tabs\t and unicode \xc3\xa9 " + std::to_string(index);
  r.input_hidden = gaussian_hidden(rng, in_len, d, 10.0);
  r.output_hidden = gaussian_hidden(rng, out_len, d, 1e-3);
  r.output_logprobs = random_logprobs(rng, out_len);
  if (index % 2 == 0) {
    std::vector<float> logits(uniform_int(rng, 1, 40));
    for (float& l : logits) l = static_cast<float>(5.0 * normal(rng));
    r.final_input_logits = std::move(logits);
  }
  const std::size_t extras = uniform_int(rng, 0, 3);
  for (std::size_t g = 0; g < extras; ++g) {
    GenerationRecord gen;
    gen.tokens = random_tokens(rng, uniform_int(rng, 0, 6));
    gen.logprobs = random_logprobs(rng, gen.tokens.size());
    gen.pooled_hidden.resize(d);
    for (float& v : gen.pooled_hidden) v = static_cast<float>(normal(rng));
    gen.text = "gen " + std::to_string(g);
    r.extra_generations.push_back(std::move(gen));
  }
  const std::size_t refs = uniform_int(rng, 0, 2);
  for (std::size_t k = 0; k < refs; ++k) r.references.push_back("ref " + std::to_string(k));
  if (index % 4 == 1) r.precomputed_similarity = uniform(rng, -1.0, 1.0);
  if (index % 5 == 2 && in_len > 0) {
    std::vector<std::size_t> ranks(in_len);
    for (std::size_t i = 0; i < in_len; ++i) ranks[i] = in_len - 1 - i;
    ranks.resize(uniform_int(rng, 1, in_len));
    r.keyword_ranks_input = ranks;
  }
  if (index % 5 == 3 && out_len > 0) r.keyword_ranks_output = std::vector<std::size_t>{0};
  if (index % 2 == 1) {
    r.num_layers = static_cast<std::int32_t>(uniform_int(rng, 1, 48));
    r.layer = static_cast<std::int32_t>(uniform_int(rng, 0, static_cast<std::size_t>(r.num_layers - 1)));
  }
  return r;
}

}  // namespace hide::testing
