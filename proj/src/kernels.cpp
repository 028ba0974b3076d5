#include "hide/kernels.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "hide/error.hpp"

namespace hide {

namespace {

constexpr std::array<std::pair<KernelFamily, std::string_view>, 9> kFamilyNames{{
    {KernelFamily::rbf, "rbf"},
    {KernelFamily::linear, "linear"},
    {KernelFamily::polynomial, "polynomial"},
    {KernelFamily::cosine, "cosine"},
    {KernelFamily::sigmoid, "sigmoid"},
    {KernelFamily::laplacian, "laplacian"},
    {KernelFamily::exponential, "exponential"},
    {KernelFamily::periodic, "periodic"},
    {KernelFamily::matern, "matern"},
}};

struct PairStats {
  double dot = 0.0;
  double sq_dist = 0.0;
  double l1_dist = 0.0;
  double norm_u = 0.0;
  double norm_v = 0.0;
};

template <class T>
PairStats pair_stats(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw ValidationError("kernel arguments differ in length (" + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()) + ")");
  }
  PairStats s;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double a = u[k];
    const double b = v[k];
    const double diff = a - b;
    s.dot += a * b;
    s.sq_dist += diff * diff;
    s.l1_dist += std::abs(diff);
    s.norm_u += a * a;
    s.norm_v += b * b;
  }
  return s;
}

double apply(const KernelSpec& spec, const PairStats& s) {
  switch (spec.family) {
    case KernelFamily::rbf:
      return std::exp(-spec.gamma * s.sq_dist);
    case KernelFamily::linear:
      return s.dot;
    case KernelFamily::polynomial:
      return std::pow(spec.gamma * s.dot + spec.coef0, spec.degree);
    case KernelFamily::cosine: {
      const double denom = std::sqrt(s.norm_u) * std::sqrt(s.norm_v);
      return denom > 0.0 ? s.dot / denom : 0.0;
    }
    case KernelFamily::sigmoid:
      return std::tanh(spec.gamma * s.dot + spec.coef0);
    case KernelFamily::laplacian:
      return std::exp(-spec.gamma * s.l1_dist);
    case KernelFamily::exponential:
      return std::exp(-spec.gamma * std::sqrt(s.sq_dist));
    case KernelFamily::periodic: {
      const double sine = std::sin(std::numbers::pi * std::sqrt(s.sq_dist) / spec.period);
      return std::exp(-2.0 * spec.gamma * sine * sine);
    }
    case KernelFamily::matern: {
      const double scaled = std::sqrt(s.sq_dist * spec.gamma);
      switch (spec.nu) {
        case MaternNu::half:
          return std::exp(-scaled);
        case MaternNu::three_halves: {
          const double a = std::numbers::sqrt3 * scaled;
          return (1.0 + a) * std::exp(-a);
        }
        case MaternNu::five_halves: {
          const double a = std::sqrt(5.0) * scaled;
          return (1.0 + a + a * a / 3.0) * std::exp(-a);
        }
      }
      break;
    }
  }
  throw ConfigError("unknown kernel family");
}

template <class T>
GramMatrix build_gram(const KernelSpec& spec, const RowMatrix<T>& samples, bool zero_diagonal) {
  const std::size_t n = samples.rows();
  if (n == 0) throw ValidationError("gram matrix of an empty sample set");
  std::vector<double> values(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i * n + i] = zero_diagonal ? 0.0 : apply(spec, pair_stats(samples.row(i), samples.row(i)));
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = apply(spec, pair_stats(samples.row(i), samples.row(j)));
      values[i * n + j] = k;
      values[j * n + i] = k;
    }
  }
  return GramMatrix(n, std::move(values), zero_diagonal);
}

}  // namespace

void KernelSpec::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("kernel gamma must be a positive finite number");
  if (degree < 1) throw ConfigError("polynomial degree must be >= 1");
  if (!(period > 0.0) || !std::isfinite(period)) throw ConfigError("periodic kernel period must be positive");
  if (!std::isfinite(coef0)) throw ConfigError("kernel coef0 must be finite");
}

bool KernelSpec::unit_diagonal() const noexcept {
  switch (family) {
    case KernelFamily::rbf:
    case KernelFamily::laplacian:
    case KernelFamily::exponential:
    case KernelFamily::periodic:
    case KernelFamily::matern:
      return true;
    default:
      return false;
  }
}

std::string_view to_string(KernelFamily family) {
  for (const auto& [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "unknown";
}

std::optional<KernelFamily> parse_kernel_family(std::string_view name) {
  for (const auto& [f, n] : kFamilyNames) {
    if (n == name) return f;
  }
  return std::nullopt;
}

std::string_view to_string(MaternNu nu) {
  switch (nu) {
    case MaternNu::half:
      return "1/2";
    case MaternNu::three_halves:
      return "3/2";
    case MaternNu::five_halves:
      return "5/2";
  }
  return "unknown";
}

std::optional<MaternNu> parse_matern_nu(std::string_view text) {
  if (text == "1/2" || text == "0.5") return MaternNu::half;
  if (text == "3/2" || text == "1.5") return MaternNu::three_halves;
  if (text == "5/2" || text == "2.5") return MaternNu::five_halves;
  return std::nullopt;
}

GramMatrix::GramMatrix(std::size_t n, std::vector<double> values, bool diag_zeroed)
    : n_(n), values_(std::move(values)), diag_zeroed_(diag_zeroed) {
  if (values_.size() != n_ * n_) throw ValidationError("gram values size mismatch");
}

double kernel_eval(const KernelSpec& spec, std::span<const double> u, std::span<const double> v) {
  return apply(spec, pair_stats(u, v));
}

double kernel_eval(const KernelSpec& spec, std::span<const float> u, std::span<const float> v) {
  return apply(spec, pair_stats(u, v));
}

GramMatrix gram(const KernelSpec& spec, const SampleMatrix& samples, bool zero_diagonal) {
  return build_gram(spec, samples, zero_diagonal);
}

GramMatrix gram(const KernelSpec& spec, const HiddenMatrix& samples, bool zero_diagonal) {
  return build_gram(spec, samples, zero_diagonal);
}

}  // namespace hide
