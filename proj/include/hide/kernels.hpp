#pragma once

// Kernel functions over hidden-state vectors and Gram-matrix construction.
//
// Families and their forms (r = ||u - v||_2, <u,v> the dot product):
//   rbf          exp(-gamma * r^2)
//   linear       <u,v>
//   polynomial   (gamma * <u,v> + coef0)^degree
//   cosine       <u,v> / (||u|| ||v||), 0 when either vector is zero
//   sigmoid      tanh(gamma * <u,v> + coef0)
//   laplacian    exp(-gamma * ||u - v||_1)
//   exponential  exp(-gamma * r)
//   periodic     exp(-2 * gamma * sin^2(pi * r / period))
//   matern       length scale l = 1/sqrt(gamma), s = r/l:
//                  nu=1/2  exp(-s)
//                  nu=3/2  (1 + sqrt3 s) exp(-sqrt3 s)
//                  nu=5/2  (1 + sqrt5 s + 5 s^2/3) exp(-sqrt5 s)

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hide/tensor_io.hpp"

namespace hide {

enum class KernelFamily { rbf, linear, polynomial, cosine, sigmoid, laplacian, exponential, periodic, matern };

enum class MaternNu { half, three_halves, five_halves };

/// Default bandwidth; mid-band of the range where scores are stable.
inline constexpr double kDefaultGamma = 1e-5;

struct KernelSpec {
  KernelFamily family = KernelFamily::rbf;
  double gamma = kDefaultGamma;
  int degree = 3;
  double coef0 = 1.0;
  double period = 1.0;
  MaternNu nu = MaternNu::three_halves;

  /// Throws ConfigError when a parameter is out of its domain.
  void validate() const;

  /// True for kernels with k(u,u) = 1 for every u.
  bool unit_diagonal() const noexcept;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

std::string_view to_string(KernelFamily family);
std::optional<KernelFamily> parse_kernel_family(std::string_view name);
std::string_view to_string(MaternNu nu);
std::optional<MaternNu> parse_matern_nu(std::string_view text);

/// Symmetric n x n matrix of pairwise kernel values.
class GramMatrix {
 public:
  GramMatrix(std::size_t n, std::vector<double> values, bool diag_zeroed);

  std::size_t n() const noexcept { return n_; }
  bool diag_zeroed() const noexcept { return diag_zeroed_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t n_;
  std::vector<double> values_;
  bool diag_zeroed_;
};

double kernel_eval(const KernelSpec& spec, std::span<const double> u, std::span<const double> v);
double kernel_eval(const KernelSpec& spec, std::span<const float> u, std::span<const float> v);

/// Pairwise kernel matrix of the sample rows. Each unordered pair is
/// evaluated once and mirrored, so the result is exactly symmetric.
GramMatrix gram(const KernelSpec& spec, const SampleMatrix& samples, bool zero_diagonal);
GramMatrix gram(const KernelSpec& spec, const HiddenMatrix& samples, bool zero_diagonal);

}  // namespace hide
