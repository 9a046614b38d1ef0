#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ilcdpd/gmp.hpp"
#include "ilcdpd/signal.hpp"

namespace ilcdpd {

/// A device under test: maps one period of input to the steady-state periodic
/// response of the same length and sample rate.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual Signal apply(const Signal& input) = 0;
};

/// Behavioral stand-in for a power amplifier:
///   y = forward_gmp(circular_fir(prefilter, clip(u))) + noise
struct SurrogatePa {
  std::string preset_id = "custom";
  GmpModel forward{GmpOrders{}};
  std::vector<cplx> prefilter{cplx{1.0, 0.0}};
  /// Std of the complex output noise, E|n|^2 = noise_std^2.
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
  /// Input magnitudes above this are clipped (phase kept).
  std::optional<double> saturation_limit;
};

struct PlantResponse {
  Signal output;
  bool clipped = false;
};

/// Noise for call `call_index` is drawn from derive_seed(noise_seed,
/// call_index), so the result is a pure function of (pa, u, call_index).
/// Throws InvalidInput on bad prefilter/orders and PlantDiverged when the
/// output is non-finite.
PlantResponse surrogate_apply(const SurrogatePa& pa, const Signal& u,
                              std::uint64_t call_index = 0);

/// Plant wrapper that numbers its calls so repeated measurements see fresh
/// noise. Safe to share between threads.
class SurrogatePlant : public Plant {
 public:
  explicit SurrogatePlant(SurrogatePa pa) : pa_(std::move(pa)) {}

  Signal apply(const Signal& input) override;

  const SurrogatePa& pa() const { return pa_; }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  SurrogatePa pa_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Mild-nonlinearity preset "mild-v1": 3-tap complex prefilter and a GMP with
/// n_m = 2, n_p = 3, n_g = 1. The static envelope gain expands slightly at
/// mid amplitude and compresses towards the peaks, with AM/PM; in-band
/// distortion on a unit-rms OFDM frame is about 30 dB below the signal. The
/// coefficients are made up for this toolkit and match presets/mild_v1.preset.
SurrogatePa mild_preset();

/// Noiseless linear plant: the given FIR followed by unit gain.
SurrogatePa linear_preset(std::vector<cplx> fir);

// Preset files, one entry per line ('#' starts a comment):
//   ilcdpd-preset 1
//   id <name>
//   prefilter <re> <im>        (one line per tap, in order)
//   noise_std <value>
//   noise_seed <value>
//   saturation <value>         (optional)
//   orders / alpha / beta lines as in GMP model files
SurrogatePa read_preset(const std::filesystem::path& path);
void write_preset(const SurrogatePa& pa, const std::filesystem::path& path);

/// "builtin:mild-v1" or a file path.
SurrogatePa load_preset(const std::string& spec);

/// y[t] = sum_i h[i] x[(t - i) mod N]
std::vector<cplx> circular_fir(std::span<const cplx> taps,
                               std::span<const cplx> x);

}  // namespace ilcdpd
