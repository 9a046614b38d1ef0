#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ilcdpd/plant.hpp"
#include "ilcdpd/siggen.hpp"
#include "ilcdpd/signal.hpp"

namespace ilcdpd {

/// Nonparametric best linear approximation on the controlled bins of `grid`.
/// g_bla and variance are indexed like grid.controlled_bins().
struct FrfEstimate {
  FrequencyGrid grid;
  std::vector<cplx> g_bla;
  /// Variance of the mean: sample variance of the per-realization ratios / M.
  std::vector<double> variance;
  std::size_t n_realizations = 0;
  double sample_rate_hz = 1.0;

  /// g_bla at DFT bin k (must be controlled).
  cplx at(std::size_t k) const;
};

/// Inverse BLA on the retained controlled bins. `grid` has the dropped bins
/// removed from both its sets.
struct LearningFilter {
  FrequencyGrid grid;
  std::vector<cplx> l;  // indexed like grid.controlled_bins()
  double gain_floor = 0.0;
  std::vector<std::size_t> dropped_bins;
};

/// Measures M multisine realizations (seed of realization m is
/// derive_seed(spec.seed, m)) and averages Y/U per controlled bin. The
/// multisine must excite every controlled bin.
FrfEstimate estimate_bla(Plant& plant, const MultisineSpec& spec,
                         std::size_t m_realizations);

/// Same estimator on already measured periods.
FrfEstimate estimate_bla(std::span<const Signal> inputs,
                         std::span<const Signal> outputs,
                         const FrequencyGrid& grid);

/// 1e-6 * max|g_bla|.
double default_gain_floor(const FrfEstimate& frf, double relative = 1e-6);

/// l = 1/g_bla where |g_bla| >= gain_floor; other bins are dropped.
/// Throws UnusableBla when nothing survives.
LearningFilter invert_frf(const FrfEstimate& frf, double gain_floor);

/// Columns: bin_index, freq_hz, re, im, variance. The header line records N,
/// fs, excited bins and the realization count so the file can be read back.
void write_frf_csv(const FrfEstimate& frf, const std::filesystem::path& path);
FrfEstimate read_frf_csv(const std::filesystem::path& path);

}  // namespace ilcdpd
