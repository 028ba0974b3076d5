#include "hide/hsic.hpp"

#include <vector>

#include "hide/error.hpp"

namespace hide {

namespace {

constexpr double kClampTolerance = 1e-12;

void check_pair(const GramMatrix& kx, const GramMatrix& ky, bool want_zeroed, std::string_view who) {
  if (kx.n() != ky.n()) {
    throw ValidationError(std::string(who) + ": Gram sizes differ (" + std::to_string(kx.n()) + " vs " +
                          std::to_string(ky.n()) + ")");
  }
  if (kx.diag_zeroed() != want_zeroed || ky.diag_zeroed() != want_zeroed) {
    throw ValidationError(std::string(who) + (want_zeroed ? ": expects diagonal-zeroed Gram matrices"
                                                          : ": expects Gram matrices with the diagonal kept"));
  }
}

/// Tr(A B), 1'A1 * 1'B1 and 1'A B 1 for symmetric A, B.
struct TraceTerms {
  double trace;
  double sum_product;
  double row_sum_dot;
};

TraceTerms trace_terms(const GramMatrix& a, const GramMatrix& b) {
  const std::size_t n = a.n();
  std::vector<double> ra(n, 0.0);
  std::vector<double> rb(n, 0.0);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double av = a(i, j);
      const double bv = b(i, j);
      trace += av * bv;
      ra[i] += av;
      rb[i] += bv;
    }
  }
  double sa = 0.0;
  double sb = 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += ra[i];
    sb += rb[i];
    dot += ra[i] * rb[i];
  }
  return {trace, sa * sb, dot};
}

}  // namespace

std::string_view to_string(HsicVariant variant) {
  switch (variant) {
    case HsicVariant::biased:
      return "biased";
    case HsicVariant::unbiased:
      return "unbiased";
    case HsicVariant::hide:
      return "hide";
  }
  return "unknown";
}

std::optional<HsicVariant> parse_hsic_variant(std::string_view name) {
  if (name == "biased") return HsicVariant::biased;
  if (name == "unbiased") return HsicVariant::unbiased;
  if (name == "hide") return HsicVariant::hide;
  return std::nullopt;
}

std::size_t min_sample_size(HsicVariant variant) noexcept {
  switch (variant) {
    case HsicVariant::biased:
      return 2;
    case HsicVariant::unbiased:
      return 4;
    case HsicVariant::hide:
      return 1;
  }
  return 1;
}

double hsic_biased(const GramMatrix& kx, const GramMatrix& ky) {
  check_pair(kx, ky, false, "hsic_biased");
  const std::size_t n = kx.n();
  if (n < 2) throw UnsupportedSampleSize("hsic_biased needs n >= 2, got " + std::to_string(n));

  // Tr(Kx H Ky H) = sum_ij (H Kx H)_ij (Ky)_ij.
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row_mean[i] += kx(i, j);
    grand += row_mean[i];
    row_mean[i] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n) * static_cast<double>(n);

  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      trace += (kx(i, j) - row_mean[i] - row_mean[j] + grand) * ky(i, j);
    }
  }
  const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  const double value = trace / denom;
  return (value < 0.0 && value > -kClampTolerance) ? 0.0 : value;
}

double hsic_unbiased(const GramMatrix& kx, const GramMatrix& ky) {
  check_pair(kx, ky, true, "hsic_unbiased");
  const std::size_t n = kx.n();
  if (n < 4) {
    throw UnsupportedSampleSize("hsic_unbiased is undefined for n = " + std::to_string(n) + " (needs n >= 4)");
  }
  const auto t = trace_terms(kx, ky);
  const double m = static_cast<double>(n);
  const double bracket = t.trace + t.sum_product / ((m - 1.0) * (m - 2.0)) - 2.0 / (m - 2.0) * t.row_sum_dot;
  return bracket / (m * (m - 3.0));
}

double hsic_hide(const GramMatrix& kx, const GramMatrix& ky) {
  check_pair(kx, ky, true, "hsic_hide");
  const std::size_t n = kx.n();
  if (n == 0) throw UnsupportedSampleSize("hsic_hide needs n >= 1");
  const auto t = trace_terms(kx, ky);
  const double m = static_cast<double>(n);
  const double bracket = t.trace + t.sum_product / (m * m) - 2.0 / m * t.row_sum_dot;
  return bracket / (m * m);
}

double hsic(HsicVariant variant, const KernelSpec& spec, const SampleMatrix& x, const SampleMatrix& y) {
  if (x.rows() != y.rows()) {
    throw ValidationError("hsic: sample counts differ (" + std::to_string(x.rows()) + " vs " +
                          std::to_string(y.rows()) + ")");
  }
  if (x.rows() < min_sample_size(variant)) {
    throw UnsupportedSampleSize("hsic " + std::string(to_string(variant)) + " needs n >= " +
                                std::to_string(min_sample_size(variant)) + ", got " + std::to_string(x.rows()));
  }
  const bool zeroed = variant != HsicVariant::biased;
  const auto kx = gram(spec, x, zeroed);
  const auto ky = gram(spec, y, zeroed);
  switch (variant) {
    case HsicVariant::biased:
      return hsic_biased(kx, ky);
    case HsicVariant::unbiased:
      return hsic_unbiased(kx, ky);
    case HsicVariant::hide:
      return hsic_hide(kx, ky);
  }
  throw ConfigError("unknown HSIC variant");
}

}  // namespace hide
