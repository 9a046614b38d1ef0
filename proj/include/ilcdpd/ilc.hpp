#pragma once

// Frequency-domain plant-inversion ILC with Q = 1:
//
//   E_j     = Y_d - Y_j
//   U_{j+1} = U_j + relaxation * L * E_j     on the controlled bins
//
// with L = 1 / G_bla and u_0 = r. Bins outside the learning filter's grid are
// never touched.

#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "ilcdpd/bla.hpp"
#include "ilcdpd/plant.hpp"
#include "ilcdpd/signal.hpp"

namespace ilcdpd {

struct IlcConfig {
  int max_iterations = 20;
  /// Scales the update; 1 is the plain plant-inversion law.
  double relaxation = 1.0;
  /// Stop once rms(E_j) <= stop_tolerance * rms(Y_d) on the controlled bins.
  double stop_tolerance = 1e-6;
  /// Declare divergence when rms(E_j) > divergence_factor * best so far.
  double divergence_factor = 2.0;
  /// Plant measurements averaged per iteration.
  int averaging = 1;

  void validate() const;
};

struct BlaReference {};
struct ConstantGain {
  cplx gain{1.0, 0.0};
};
using DesiredOutputMode = std::variant<BlaReference, ConstantGain>;

struct IlcTrajectory {
  std::vector<Signal> inputs;   // u_0 .. u_J
  std::vector<Signal> outputs;  // y_0 .. y_J
  /// rms of E_j over the controlled bins (DFT units).
  std::vector<double> error_norms;
  /// rms of Y_d over the same bins.
  double desired_norm = 0.0;
  bool converged = false;  // stop tolerance reached
  bool diverged = false;
  std::size_t best_index = 0;

  std::size_t iterations_run() const {
    return inputs.empty() ? 0 : inputs.size() - 1;
  }
  const Signal& best_input() const { return inputs.at(best_index); }
};

/// Y_d = G R on the FRF's controlled bins, zero elsewhere.
Spectrum make_desired(const Signal& r, const DesiredOutputMode& mode,
                      const FrfEstimate& frf);

/// Undoes the desired-gain shaping: Y / G on the controlled bins, zero
/// elsewhere. Used to build post-inverse training inputs.
Signal remove_desired_gain(const Signal& y, const DesiredOutputMode& mode,
                           const FrfEstimate& frf);

/// One learning update. Throws Divergence naming the bin on a non-finite
/// result.
Spectrum ilc_step(const Spectrum& u, const Spectrum& y, const Spectrum& y_d,
                  const LearningFilter& filter, double relaxation);

/// Runs the loop from u_0 = r. Plant errors are rethrown with the iteration
/// index in the message.
IlcTrajectory run_ilc(Plant& plant, const Signal& r, const Spectrum& y_d,
                      const LearningFilter& filter, const IlcConfig& config);

/// rms of |X[k]| over the given bins.
double rms_over(const Spectrum& x, std::span<const std::size_t> bins);

struct CompensationError {
  std::vector<double> per_bin_db;  // 20 log10 |Y_d - Y_c| per DFT bin
  double rms = 0.0;                // over the grid's controlled bins
};

CompensationError compensation_error(const Spectrum& y_d, const Spectrum& y_c,
                                     const FrequencyGrid& grid);

/// Rows: iteration, error_rms, error_rms_db (relative to rms(Y_d)).
void write_trajectory_csv(const IlcTrajectory& traj,
                          const std::filesystem::path& path);

}  // namespace ilcdpd
