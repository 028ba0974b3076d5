#pragma once

// Empirical HSIC estimators over Gram matrices.
//
// With K~ the diagonal-zeroed Gram matrices and 1 the all-ones vector:
//   biased    Tr(Kx H Ky H) / (n-1)^2, H = I - 11'/n            (n >= 2)
//   unbiased  [Tr(K~x K~y) + (1'K~x 1)(1'K~y 1)/((n-1)(n-2))
//              - 2/(n-2) 1'K~x K~y 1] / (n(n-3))                  (n >= 4)
//   hide      [Tr(K~x K~y) + (1'K~x 1)(1'K~y 1)/n^2
//              - 2/n 1'K~x K~y 1] / n^2                           (n >= 1)
//
// The hide score is the unbiased form with every (n - c) replaced by n.
// It is 0 at n = 1 and k_x(x1,x2) k_y(y1,y2)/4 at n = 2.

#include <optional>
#include <string_view>

#include "hide/kernels.hpp"
#include "hide/tensor_io.hpp"

namespace hide {

enum class HsicVariant { biased, unbiased, hide };

std::string_view to_string(HsicVariant variant);
std::optional<HsicVariant> parse_hsic_variant(std::string_view name);

/// Smallest sample size each variant is defined for.
std::size_t min_sample_size(HsicVariant variant) noexcept;

/// Expects full Gram matrices (diagonal kept). Round-off negatives of
/// magnitude below 1e-12 are clamped to zero.
double hsic_biased(const GramMatrix& kx, const GramMatrix& ky);

/// Expects diagonal-zeroed Gram matrices; may be negative.
double hsic_unbiased(const GramMatrix& kx, const GramMatrix& ky);

/// Expects diagonal-zeroed Gram matrices; may be negative.
double hsic_hide(const GramMatrix& kx, const GramMatrix& ky);

/// Builds both Gram matrices with the diagonal convention `variant`
/// requires and evaluates it.
double hsic(HsicVariant variant, const KernelSpec& spec, const SampleMatrix& x, const SampleMatrix& y);

}  // namespace hide
