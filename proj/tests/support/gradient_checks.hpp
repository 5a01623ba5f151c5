#ifndef DFM_TESTS_GRADIENT_CHECKS_HPP_
#define DFM_TESTS_GRADIENT_CHECKS_HPP_

#include <cstdint>

namespace dfm::oracle {

// Each returns the worst relative error between the library's analytic
// gradient and central differences (h = 1e-4) over random probes.

/// L = sum(r * F^N) through five rectification steps; `probes` feature
/// entries and `probes` field entries. Differences are taken on the
/// double-precision reference so float rounding does not swamp h.
double frf_gradient_error(std::uint64_t seed, int probes);

/// Direction-field loss w.r.t. the predicted field, `probes` entries.
double df_loss_gradient_error(std::uint64_t seed, int probes);

}  // namespace dfm::oracle

#endif  // DFM_TESTS_GRADIENT_CHECKS_HPP_
