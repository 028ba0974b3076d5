#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "hide/alignment.hpp"
#include "hide/error.hpp"
#include "hide/hsic.hpp"

namespace hide {
namespace {

using testing::Rng;

ExampleRecord record_with(const HiddenMatrix& in, const HiddenMatrix& out) {
  ExampleRecord r;
  r.id = "r";
  for (std::size_t i = 0; i < in.rows(); ++i) r.prompt_tokens.push_back("p" + std::to_string(i));
  for (std::size_t i = 0; i < out.rows(); ++i) r.output_tokens.push_back("o" + std::to_string(i));
  r.input_hidden = in;
  r.output_hidden = out;
  r.output_logprobs.assign(out.rows(), -0.1);
  return r;
}

std::vector<std::string> names(std::size_t n) { return std::vector<std::string>(n, "t"); }

double cosine(std::span<const float> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += static_cast<double>(a[k]) * a[k];
    nb += b[k] * b[k];
  }
  return dot / std::sqrt(na * nb);
}

std::vector<double> row_mean(const HiddenMatrix& h) {
  std::vector<double> m(h.dim(), 0.0);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = 0; j < h.dim(); ++j) m[j] += h(i, j) / static_cast<double>(h.rows());
  }
  return m;
}

TEST(EffectiveBudget, IsTheMinimum) {
  static_assert(effective_budget(20, 300, 45) == 20);
  EXPECT_EQ(effective_budget(20, 300, 45), 20u);
  EXPECT_EQ(effective_budget(20, 300, 1), 1u);
  EXPECT_EQ(effective_budget(20, 0, 45), 0u);
  EXPECT_EQ(effective_budget(5, 3, 4), 3u);
}

TEST(Mmr, FullBudgetIsAPermutation) {
  Rng rng(1);
  const auto h = testing::gaussian_hidden(rng, 9, 4);
  auto picked = select_keywords_mmr(h, names(9), 9, 0.5);
  std::sort(picked.begin(), picked.end());
  std::vector<std::size_t> all(9);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(picked, all);
}

TEST(Mmr, OrthogonalRowIsPickedBySecondStep) {
  // Two near-parallel rows and one orthogonal to both directions' mean.
  const HiddenMatrix h(3, 2, {1.0f, 0.05f, 1.0f, -0.05f, 0.0f, 1.0f});
  const auto mean = row_mean(h);
  // Hand enumeration of the greedy path with lambda = 0.5.
  std::vector<double> rel(3);
  for (std::size_t i = 0; i < 3; ++i) rel[i] = cosine(h.row(i), mean);
  const std::size_t first = static_cast<std::size_t>(std::max_element(rel.begin(), rel.end()) - rel.begin());
  ASSERT_EQ(first, 0u);
  const auto picked = select_keywords_mmr(h, names(3), 3, 0.5);
  EXPECT_EQ(picked[0], 0u);
  EXPECT_EQ(picked[1], 2u);
  EXPECT_EQ(picked[2], 1u);
}

TEST(Mmr, LambdaOneIsRelevanceRanking) {
  Rng rng(2);
  const auto h = testing::gaussian_hidden(rng, 12, 5);
  const auto mean = row_mean(h);
  std::vector<std::size_t> want(12);
  std::iota(want.begin(), want.end(), std::size_t{0});
  std::stable_sort(want.begin(), want.end(),
                   [&](std::size_t a, std::size_t b) { return cosine(h.row(a), mean) > cosine(h.row(b), mean); });
  EXPECT_EQ(select_keywords_mmr(h, names(12), 12, 1.0), want);
}

TEST(Mmr, TiesGoToLowestIndex) {
  const HiddenMatrix h(4, 2, {1, 1, 1, 1, 1, 1, 1, 1});
  EXPECT_EQ(select_keywords_mmr(h, names(4), 4, 0.5), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Mmr, BudgetAboveRowsThrows) {
  Rng rng(3);
  const auto h = testing::gaussian_hidden(rng, 3, 2);
  EXPECT_THROW(select_keywords_mmr(h, names(3), 4, 0.5), ValidationError);
  EXPECT_THROW(select_keywords_mmr(h, names(2), 2, 0.5), ValidationError);
}

TEST(AlignKeyword, ShapesFollowTheBudget) {
  Rng rng(4);
  const auto r = record_with(testing::gaussian_hidden(rng, 50, 8), testing::gaussian_hidden(rng, 50, 8));
  const auto a = align_keyword(r, AlignmentSpec{});
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->n_eff, 20u);
  EXPECT_EQ(a->x.rows(), 20u);
  EXPECT_EQ(a->y.rows(), 20u);
  EXPECT_EQ(a->x.dim(), 8u);
}

TEST(AlignKeyword, RowsAreExactCopies) {
  Rng rng(5);
  const auto r = record_with(testing::gaussian_hidden(rng, 14, 6), testing::gaussian_hidden(rng, 9, 6));
  const auto a = align_keyword(r, AlignmentSpec{});
  ASSERT_TRUE(a.has_value());
  ASSERT_EQ(a->n_eff, 9u);
  for (std::size_t k = 0; k < a->n_eff; ++k) {
    const auto src_in = r.input_hidden.row((*a->selected_input_indices)[k]);
    const auto src_out = r.output_hidden.row((*a->selected_output_indices)[k]);
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(a->x(k, j), static_cast<double>(src_in[j]));
      EXPECT_EQ(a->y(k, j), static_cast<double>(src_out[j]));
    }
  }
}

TEST(AlignKeyword, SingleOutputTokenScoresZero) {
  Rng rng(6);
  const auto r = record_with(testing::gaussian_hidden(rng, 10, 4), testing::gaussian_hidden(rng, 1, 4));
  const auto a = align_keyword(r, AlignmentSpec{});
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->n_eff, 1u);
  EXPECT_EQ(hsic(HsicVariant::hide, KernelSpec{}, a->x, a->y), 0.0);
}

TEST(AlignKeyword, EmptySideIsUndetermined) {
  Rng rng(7);
  EXPECT_FALSE(align_keyword(record_with(HiddenMatrix(0, 4), testing::gaussian_hidden(rng, 3, 4)), AlignmentSpec{}));
  EXPECT_FALSE(align_keyword(record_with(testing::gaussian_hidden(rng, 3, 4), HiddenMatrix(0, 4)), AlignmentSpec{}));
  AlignmentSpec svd;
  svd.strategy = AlignmentStrategy::svd;
  EXPECT_FALSE(align_svd(record_with(HiddenMatrix(0, 4), testing::gaussian_hidden(rng, 3, 4)), svd));
}

TEST(AlignKeyword, ExternalRanksAreTruncated) {
  Rng rng(8);
  auto r = record_with(testing::gaussian_hidden(rng, 12, 3), testing::gaussian_hidden(rng, 12, 3));
  r.keyword_ranks_input = std::vector<std::size_t>{5, 2, 9};
  r.keyword_ranks_output = std::vector<std::size_t>{1, 0, 7};
  AlignmentSpec spec;
  spec.strategy = AlignmentStrategy::external_keywords;
  spec.token_budget = 2;
  const auto a = align_keyword(r, spec);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(*a->selected_input_indices, (std::vector<std::size_t>{5, 2}));
  EXPECT_EQ(*a->selected_output_indices, (std::vector<std::size_t>{1, 0}));
}

TEST(AlignKeyword, ShortExternalRanksAreToppedUpWithMmr) {
  Rng rng(9);
  auto r = record_with(testing::gaussian_hidden(rng, 8, 3), testing::gaussian_hidden(rng, 8, 3));
  r.keyword_ranks_input = std::vector<std::size_t>{6};
  r.keyword_ranks_output = std::vector<std::size_t>{};
  AlignmentSpec spec;
  spec.strategy = AlignmentStrategy::external_keywords;
  spec.token_budget = 4;
  const auto a = align_keyword(r, spec);
  ASSERT_TRUE(a.has_value());
  const auto& in = *a->selected_input_indices;
  ASSERT_EQ(in.size(), 4u);
  EXPECT_EQ(in[0], 6u);
  EXPECT_EQ(std::set<std::size_t>(in.begin(), in.end()).size(), 4u);
  EXPECT_EQ(in, select_keywords_mmr(r.input_hidden, r.prompt_tokens, 4, 0.5, std::vector<std::size_t>{6}));
  EXPECT_EQ(*a->selected_output_indices, select_keywords_mmr(r.output_hidden, r.output_tokens, 4, 0.5));
}

TEST(AlignKeyword, MissingRanksWithoutFallbackIsConfigError) {
  Rng rng(10);
  const auto r = record_with(testing::gaussian_hidden(rng, 5, 3), testing::gaussian_hidden(rng, 5, 3));
  AlignmentSpec spec;
  spec.strategy = AlignmentStrategy::external_keywords;
  spec.allow_fallback = false;
  EXPECT_THROW(align_keyword(r, spec), ConfigError);
  spec.allow_fallback = true;
  const auto a = align_keyword(r, spec);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(*a->selected_input_indices, select_keywords_mmr(r.input_hidden, r.prompt_tokens, 5, 0.5));
}

TEST(AlignSpec, Validation) {
  AlignmentSpec spec;
  spec.token_budget = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = AlignmentSpec{};
  spec.mmr_lambda = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  EXPECT_EQ(parse_alignment_strategy("keyword"), AlignmentStrategy::keyword_mmr);
  EXPECT_EQ(parse_alignment_strategy("external"), AlignmentStrategy::external_keywords);
  EXPECT_EQ(parse_alignment_strategy("svd"), AlignmentStrategy::svd);
  EXPECT_FALSE(parse_alignment_strategy("random"));
}

Eigen::MatrixXd as_eigen(const HiddenMatrix& h) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(h.rows()), static_cast<Eigen::Index>(h.dim()));
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = 0; j < h.dim(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h(i, j);
  }
  return m;
}

Eigen::MatrixXd as_eigen(const SampleMatrix& h) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(h.rows()), static_cast<Eigen::Index>(h.dim()));
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = 0; j < h.dim(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h(i, j);
  }
  return m;
}

TEST(AlignSvd, FullRankTruncationPreservesGram) {
  Rng rng(11);
  const auto h = testing::gaussian_hidden(rng, 8, 5);
  const auto xr = as_eigen(svd_rows(h, 5));
  const auto hh = as_eigen(h);
  const Eigen::MatrixXd want = hh.transpose() * hh;
  const Eigen::MatrixXd got = xr.transpose() * xr;
  EXPECT_LE((got - want).norm(), 1e-6 * want.norm());
}

TEST(AlignSvd, RankOneGivesZeroSecondRow) {
  const float a[4] = {1.0f, 2.0f, -1.0f, 0.5f};
  const float v[3] = {1.0f, 2.0f, 3.0f};
  HiddenMatrix h(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) h(i, j) = a[i] * v[j];
  }
  const auto rows = svd_rows(h, 2);
  double second = 0.0;
  for (double x : rows.row(1)) second += x * x;
  EXPECT_LT(std::sqrt(second), 1e-10);
  double first = 0.0;
  for (double x : rows.row(0)) first += x * x;
  EXPECT_NEAR(std::sqrt(first), std::sqrt((1 + 4 + 1 + 0.25) * (1 + 4 + 9)), 1e-12);
}

TEST(AlignSvd, RowNormsAreTopSingularValues) {
  Rng rng(12);
  const auto h = testing::gaussian_hidden(rng, 30, 16);
  const auto rows = svd_rows(h, 5);
  const auto hh = as_eigen(h);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hh.transpose() * hh);
  const auto& ev = eig.eigenvalues();  // ascending
  for (std::size_t k = 0; k < 5; ++k) {
    double norm = 0.0;
    for (double x : rows.row(k)) norm += x * x;
    EXPECT_NEAR(std::sqrt(norm), std::sqrt(ev(ev.size() - 1 - static_cast<Eigen::Index>(k))), 1e-8);
  }
}

TEST(AlignSvd, SignCanonicalAndPermutationInvariant) {
  Rng rng(13);
  const auto h = testing::gaussian_hidden(rng, 20, 7);
  const auto rows = svd_rows(h, 6);
  for (std::size_t k = 0; k < 6; ++k) {
    const auto r = rows.row(k);
    const auto big = std::max_element(r.begin(), r.end(), [](double a, double b) { return std::fabs(a) < std::fabs(b); });
    EXPECT_GE(*big, 0.0);
  }
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto shuffled = svd_rows(h.gather(perm), 6);
  for (std::size_t k = 0; k < 6; ++k) {
    for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR(rows(k, j), shuffled(k, j), 1e-8);
  }
}

TEST(AlignSvd, BudgetAboveRankPadsZeroRows) {
  Rng rng(14);
  const auto r = record_with(testing::gaussian_hidden(rng, 10, 3), testing::gaussian_hidden(rng, 12, 3));
  AlignmentSpec spec;
  spec.strategy = AlignmentStrategy::svd;
  const auto a = align(r, spec);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->n_eff, 10u);
  EXPECT_EQ(a->x.rows(), a->y.rows());
  EXPECT_FALSE(a->selected_input_indices.has_value());
  for (std::size_t k = 3; k < 10; ++k) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a->x(k, j), 0.0);
  }
}

TEST(Align, BothStrategiesMatchSampleCounts) {
  Rng rng(15);
  for (int t = 0; t < 30; ++t) {
    const auto r = record_with(testing::gaussian_hidden(rng, testing::uniform_int(rng, 1, 30), 4),
                               testing::gaussian_hidden(rng, testing::uniform_int(rng, 1, 30), 4));
    for (auto s : {AlignmentStrategy::keyword_mmr, AlignmentStrategy::svd}) {
      AlignmentSpec spec;
      spec.strategy = s;
      const auto a = align(r, spec);
      ASSERT_TRUE(a.has_value());
      EXPECT_EQ(a->x.rows(), a->y.rows());
      EXPECT_EQ(a->x.rows(), a->n_eff);
    }
  }
}

}  // namespace
}  // namespace hide
