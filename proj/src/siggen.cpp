#include "ilcdpd/siggen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ilcdpd/error.hpp"
#include "ilcdpd/rng.hpp"

namespace ilcdpd {

Constellation qam_constellation(std::size_t order) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(order)));
  if (order < 4 || side * side != order) {
    throw Error(ErrorKind::InvalidInput,
                "QAM order must be a square >= 4, got " +
                    std::to_string(order));
  }
  Constellation points;
  points.reserve(order);
  double power = 0.0;
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t q = 0; q < side; ++q) {
      cplx p(2.0 * static_cast<double>(i) - static_cast<double>(side - 1),
             2.0 * static_cast<double>(q) - static_cast<double>(side - 1));
      points.push_back(p);
      power += std::norm(p);
    }
  }
  const double scale = 1.0 / std::sqrt(power / static_cast<double>(order));
  for (auto& p : points) p *= scale;
  return points;
}

Constellation constellation_by_name(const std::string& name) {
  if (name == "qpsk") return qam_constellation(4);
  if (name.rfind("qam", 0) == 0) {
    try {
      return qam_constellation(std::stoul(name.substr(3)));
    } catch (const std::logic_error&) {
    }
  }
  throw Error(ErrorKind::InvalidInput, "unknown constellation '" + name + "'");
}

MultisineSpec flat_multisine(const FrequencyGrid& grid,
                             const std::vector<std::size_t>& inband,
                             double rms, double oob_ratio, std::uint64_t seed,
                             double sample_rate_hz, double carrier_hz) {
  const auto bins = grid.excited_bins();
  std::vector<double> amplitudes(bins.size());
  double power = 0.0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const bool in =
        std::find(inband.begin(), inband.end(), bins[i]) != inband.end();
    amplitudes[i] = in ? 1.0 : oob_ratio;
    power += amplitudes[i] * amplitudes[i];
  }
  if (power > 0.0) {
    const double scale = rms / std::sqrt(power);
    for (auto& a : amplitudes) a *= scale;
  }
  return MultisineSpec{grid, std::move(amplitudes), seed, sample_rate_hz,
                       carrier_hz};
}

Signal gen_multisine(const MultisineSpec& spec) {
  const auto bins = spec.grid.excited_bins();
  if (bins.empty()) {
    throw Error(ErrorKind::InvalidInput, "multisine has no excited bins");
  }
  if (spec.amplitudes.size() != bins.size()) {
    throw Error(ErrorKind::InvalidInput,
                "amplitude profile length does not match the excited set");
  }
  const std::size_t n = spec.grid.n();
  Rng rng(spec.seed);
  std::vector<cplx> spectrum(n);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (!(spec.amplitudes[i] >= 0.0)) {
      throw Error(ErrorKind::InvalidInput, "negative multisine amplitude");
    }
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    spectrum[bins[i]] = std::polar(static_cast<double>(n) * spec.amplitudes[i],
                                   phase);
  }
  return idft(Spectrum(std::move(spectrum), spec.sample_rate_hz,
                       spec.carrier_hz));
}

namespace {

bool contiguous(std::span<const std::size_t> bins, std::size_t n) {
  // Ascending storage splits a band that straddles DC into [0..hi] and
  // [N-lo..N-1]; count the circular gaps instead.
  if (bins.size() <= 1 || bins.size() == n) return true;
  std::size_t breaks = 0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const std::size_t next = bins[(i + 1) % bins.size()];
    if (next != (bins[i] + 1) % n) ++breaks;
  }
  return breaks == 1;
}

Signal symbols_to_signal(std::span<const std::size_t> bins, std::size_t n,
                         const Constellation& constellation, double amplitude,
                         std::uint64_t seed, double fs, double fc) {
  Rng rng(seed);
  std::vector<cplx> spectrum(n);
  for (auto k : bins) {
    spectrum[k] = static_cast<double>(n) * amplitude *
                  constellation[rng.index(constellation.size())];
  }
  return idft(Spectrum(std::move(spectrum), fs, fc));
}

void check_constellation(const Constellation& c) {
  if (c.empty()) {
    throw Error(ErrorKind::InvalidInput, "constellation is empty");
  }
}

}  // namespace

GeneratedSignal gen_ofdm(const OfdmSpec& spec) {
  const auto bins = spec.grid.excited_bins();
  if (bins.empty()) {
    throw Error(ErrorKind::InvalidInput, "OFDM spec has no excited bins");
  }
  if (!contiguous(bins, spec.grid.n())) {
    throw Error(ErrorKind::InvalidInput,
                "OFDM excited bins must form one contiguous band");
  }
  check_constellation(spec.constellation);
  if (spec.papr_bounds_db && !(spec.papr_bounds_db->first <
                               spec.papr_bounds_db->second)) {
    throw Error(ErrorKind::InvalidInput, "PAPR bounds need lo < hi");
  }
  const std::size_t attempts = spec.papr_bounds_db ? spec.max_attempts : 1;
  double lo_seen = std::numeric_limits<double>::infinity();
  double hi_seen = -std::numeric_limits<double>::infinity();
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    Signal s = symbols_to_signal(bins, spec.grid.n(), spec.constellation,
                                 spec.tone_amplitude,
                                 derive_seed(spec.seed, attempt),
                                 spec.sample_rate_hz, spec.carrier_hz);
    const double papr = papr_db(s);
    if (!spec.papr_bounds_db || (papr >= spec.papr_bounds_db->first &&
                                 papr <= spec.papr_bounds_db->second)) {
      return GeneratedSignal{std::move(s), attempt, papr};
    }
    lo_seen = std::min(lo_seen, papr);
    hi_seen = std::max(hi_seen, papr);
  }
  char msg[160];
  std::snprintf(msg, sizeof msg,
                "no OFDM realization within PAPR [%.2f, %.2f] dB after %zu "
                "attempts (achieved %.2f..%.2f dB)",
                spec.papr_bounds_db->first, spec.papr_bounds_db->second,
                attempts, lo_seen, hi_seen);
  throw Error(ErrorKind::GenerationFailed, msg);
}

std::vector<std::size_t> multiband_bins(const MultibandSpec& spec) {
  if (spec.n < 2) throw Error(ErrorKind::InvalidInput, "multiband needs N >= 2");
  if (spec.bands.empty()) {
    throw Error(ErrorKind::InvalidInput, "multiband spec has no bands");
  }
  std::vector<std::size_t> bins;
  for (const auto& band : spec.bands) {
    if (band.width < 1) {
      throw Error(ErrorKind::InvalidInput, "band width must be >= 1");
    }
    const long lo = band.center_bin - band.width / 2;
    const long hi = lo + band.width - 1;
    // Signed bins -(N-1)/2 .. N/2 cover each DFT bin exactly once.
    const long n = static_cast<long>(spec.n);
    if (lo < -((n - 1) / 2) || hi > n / 2) {
      throw Error(ErrorKind::InvalidInput,
                  "band centered at " + std::to_string(band.center_bin) +
                      " exceeds the Nyquist range");
    }
    for (long b = lo; b <= hi; ++b) bins.push_back(wrap_bin(b, spec.n));
  }
  std::sort(bins.begin(), bins.end());
  if (std::adjacent_find(bins.begin(), bins.end()) != bins.end()) {
    throw Error(ErrorKind::InvalidInput, "multiband bands overlap");
  }
  return bins;
}

Signal gen_multiband(const MultibandSpec& spec) {
  check_constellation(spec.constellation);
  const auto bins = multiband_bins(spec);
  // Same sub-seed as an unbounded gen_ofdm draw, so a single band reproduces
  // gen_ofdm over that band.
  return symbols_to_signal(bins, spec.n, spec.constellation,
                           spec.tone_amplitude, derive_seed(spec.seed, 0),
                           spec.sample_rate_hz, spec.carrier_hz);
}

}  // namespace ilcdpd
