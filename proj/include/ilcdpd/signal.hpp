#pragma once

// Complex-baseband signal and spectrum types.
//
// Every Signal is one period of an N-periodic sequence, so time shifts and
// convolutions are circular. The DFT is unnormalized in the forward direction
// and carries 1/N in the inverse:
//
//   X[k] = sum_t x[t] exp(-i 2 pi k t / N)
//   x[t] = (1/N) sum_k X[k] exp(+i 2 pi k t / N)
//
// Carrier frequency is carried along as metadata and never enters a
// computation.

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ilcdpd {

using cplx = std::complex<double>;

/// Floor used wherever a dB value of an exact zero has to stay finite.
inline constexpr double kDbFloor = -400.0;

class Signal {
 public:
  /// Throws Error(InvalidInput) on N < 2, non-finite samples, or a
  /// non-positive sample rate.
  Signal(std::vector<cplx> samples, double sample_rate_hz,
         double carrier_hz = 0.0);

  std::span<const cplx> samples() const { return samples_; }
  const cplx& operator[](std::size_t t) const { return samples_[t]; }
  std::size_t size() const { return samples_.size(); }
  double sample_rate_hz() const { return sample_rate_hz_; }
  double carrier_hz() const { return carrier_hz_; }

  /// Same metadata, new samples.
  Signal with_samples(std::vector<cplx> samples) const {
    return Signal(std::move(samples), sample_rate_hz_, carrier_hz_);
  }

  friend bool operator==(const Signal&, const Signal&) = default;

 private:
  std::vector<cplx> samples_;
  double sample_rate_hz_;
  double carrier_hz_;
};

class Spectrum {
 public:
  Spectrum(std::vector<cplx> bins, double sample_rate_hz,
           double carrier_hz = 0.0);

  std::span<const cplx> bins() const { return bins_; }
  const cplx& operator[](std::size_t k) const { return bins_[k]; }
  std::size_t size() const { return bins_.size(); }
  double sample_rate_hz() const { return sample_rate_hz_; }
  double carrier_hz() const { return carrier_hz_; }
  double bin_spacing_hz() const {
    return sample_rate_hz_ / static_cast<double>(bins_.size());
  }

  Spectrum with_bins(std::vector<cplx> bins) const {
    return Spectrum(std::move(bins), sample_rate_hz_, carrier_hz_);
  }

  friend bool operator==(const Spectrum&, const Spectrum&) = default;

 private:
  std::vector<cplx> bins_;
  double sample_rate_hz_;
  double carrier_hz_;
};

/// Bin index sets of a length-N grid. Bins are stored as 0..N-1 in ascending
/// order; negative baseband frequencies live at N-k.
class FrequencyGrid {
 public:
  /// Throws Error(InvalidInput) unless excited ⊆ controlled ⊆ {0..N-1}.
  /// Input sets are sorted; duplicates are rejected.
  FrequencyGrid(std::size_t n, std::vector<std::size_t> excited_bins,
                std::vector<std::size_t> controlled_bins);

  /// Grid from signed, inclusive bin ranges, e.g. excited [-60, 60] and
  /// controlled [-540, 240].
  static FrequencyGrid from_bands(std::size_t n, long excited_lo,
                                  long excited_hi, long controlled_lo,
                                  long controlled_hi);

  std::size_t n() const { return n_; }
  std::span<const std::size_t> excited_bins() const { return excited_; }
  std::span<const std::size_t> controlled_bins() const { return controlled_; }

  bool is_excited(std::size_t k) const;
  bool is_controlled(std::size_t k) const;

  /// Copy with the given bins removed from both sets.
  FrequencyGrid without(std::span<const std::size_t> bins) const;

  friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

 private:
  std::size_t n_;
  std::vector<std::size_t> excited_;
  std::vector<std::size_t> controlled_;
};

/// Maps a signed bin offset onto 0..N-1.
std::size_t wrap_bin(long signed_bin, std::size_t n);
/// Inverse of wrap_bin: bins above N/2 map to negative offsets.
long signed_bin(std::size_t k, std::size_t n);
/// Baseband frequency of bin k (negative for the upper half).
double bin_frequency_hz(std::size_t k, std::size_t n, double sample_rate_hz);

Spectrum dft(const Signal& signal);
Signal idft(const Spectrum& spectrum);

/// 10 log10(max|x|^2 / mean|x|^2). Throws UndefinedStatistic on all-zero input.
double papr_db(const Signal& signal);

/// 10 log10(mean|x|^2) relative to unit amplitude; kDbFloor for all-zero input.
double rms_power_db(const Signal& signal);

/// dBm for a unit-amplitude convention where |x| = 1 V peak into the load.
/// The default 50 ohm load puts unit amplitude at 10 log10(1/(2*50)/1e-3) = 10 dBm.
double rms_power_dbm(const Signal& signal, double load_ohm = 50.0);

double mean_power(std::span<const cplx> x);

/// 20 log10|value|, with exact zeros mapped to kDbFloor.
double amplitude_db(double magnitude);
/// 10 log10(power), with exact zeros mapped to kDbFloor.
double power_db(double power);

/// Circular shift: y[t] = x[(t - shift) mod N].
Signal circular_shift(const Signal& signal, long shift);

// CSV text form: header "# n=<N> fs=<hz> fc=<hz>", then one "re,im" line per
// sample in %.17e so reading back is bit-exact.
void write_signal_csv(const Signal& signal, const std::filesystem::path& path);
Signal read_signal_csv(const std::filesystem::path& path);
void write_spectrum_csv(const Spectrum& spectrum,
                        const std::filesystem::path& path);
Spectrum read_spectrum_csv(const std::filesystem::path& path);

}  // namespace ilcdpd
