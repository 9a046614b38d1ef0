#pragma once

// Seeded excitation generators: random-phase multisines, OFDM frames and
// multiband signals. All three build the spectrum directly and return one
// period via idft, so energy outside the excited bins is zero up to rounding.
//
// Tone amplitudes are time-domain amplitudes: a single tone of amplitude a at
// bin k is a*exp(i 2 pi k t / N), i.e. X[k] = N a.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ilcdpd/signal.hpp"

namespace ilcdpd {

using Constellation = std::vector<cplx>;

/// Square M-QAM (M = 4, 16, 64, ...) scaled to unit average power.
Constellation qam_constellation(std::size_t order);
/// Parses "qpsk", "qam16", "qam64", ...
Constellation constellation_by_name(const std::string& name);

struct MultisineSpec {
  FrequencyGrid grid;
  /// One amplitude per excited bin, in grid.excited_bins() order.
  std::vector<double> amplitudes;
  std::uint64_t seed = 0;
  double sample_rate_hz = 1.0;
  double carrier_hz = 0.0;
};

/// Multisine over every excited bin of the grid. Bins inside `inband` get
/// amplitude `inband_amplitude`; the rest get `oob_ratio` times that. The
/// amplitude is chosen so the time-domain rms equals `rms`.
MultisineSpec flat_multisine(const FrequencyGrid& grid,
                             const std::vector<std::size_t>& inband,
                             double rms, double oob_ratio, std::uint64_t seed,
                             double sample_rate_hz, double carrier_hz);

struct OfdmSpec {
  /// Excited bins must form one contiguous band (modulo N).
  FrequencyGrid grid;
  Constellation constellation;
  double tone_amplitude = 1.0;
  std::optional<std::pair<double, double>> papr_bounds_db{};
  std::uint64_t seed = 0;
  std::size_t max_attempts = 1000;
  double sample_rate_hz = 1.0;
  double carrier_hz = 0.0;
};

struct BandSpec {
  long center_bin;  // signed offset from DC
  long width;       // number of bins
};

struct MultibandSpec {
  std::size_t n = 0;
  std::vector<BandSpec> bands;
  Constellation constellation;
  double tone_amplitude = 1.0;
  std::uint64_t seed = 0;
  double sample_rate_hz = 1.0;
  double carrier_hz = 0.0;
};

struct GeneratedSignal {
  Signal signal;
  /// Sub-seed index of the accepted draw (0 when no bounds are applied).
  std::size_t realization_index = 0;
  double papr_db = 0.0;
};

/// Spectrum: amplitude at excited bins with i.i.d. uniform phases, zero
/// elsewhere. Throws InvalidInput on an empty excited set or a profile of the
/// wrong length.
Signal gen_multisine(const MultisineSpec& spec);

/// Throws GenerationFailed when max_attempts draws all miss the PAPR bounds.
GeneratedSignal gen_ofdm(const OfdmSpec& spec);

/// Throws InvalidInput on overlapping or out-of-range bands.
Signal gen_multiband(const MultibandSpec& spec);

/// Excited bins of a multiband spec, ascending.
std::vector<std::size_t> multiband_bins(const MultibandSpec& spec);

}  // namespace ilcdpd
