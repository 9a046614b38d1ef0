#pragma once

// Config-driven pipelines: BLA estimation, ILC, GMP fitting and validation,
// each writing into a run directory:
//
//   <run>/config.ini       resolved config (replays the run)
//   <run>/INCOMPLETE       present while a command is running or after a crash
//   <run>/signals/         reference, predistorted and measured periods
//   <run>/frf/             BLA estimate
//   <run>/ilc/             per-realization trajectories and a summary
//   <run>/models/          GMP pre-/post-inverse and cross-validation tables
//   <run>/report/          validation metrics and error spectra

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ilcdpd/error.hpp"
#include "ilcdpd/gmp.hpp"
#include "ilcdpd/ilc.hpp"
#include "ilcdpd/metrics.hpp"
#include "ilcdpd/plant.hpp"
#include "ilcdpd/siggen.hpp"

namespace ilcdpd {

struct SignalConfig {
  std::string kind = "ofdm";  // ofdm | multisine | multiband
  std::size_t n = 0;
  double sample_rate_hz = 0.0;
  double carrier_hz = 0.0;
  long excited_lo = 0;  // signed, inclusive (ofdm, multisine)
  long excited_hi = 0;
  std::vector<BandSpec> bands;  // multiband
  long controlled_lo = 0;
  long controlled_hi = 0;
  double rms = 1.0;
  std::string constellation = "qam16";
  std::optional<std::pair<double, double>> papr_bounds_db;
  std::optional<std::pair<double, double>> validation_papr_bounds_db;
  std::size_t realizations = 0;
  std::uint64_t seed = 0;
  std::uint64_t validation_seed = 0;
  std::size_t max_attempts = 1000;
};

struct PlantConfig {
  std::string preset = "builtin:mild-v1";
  std::optional<std::string> remote;  // host:port
  std::optional<double> noise_std;    // overrides the preset
  std::optional<std::uint64_t> noise_seed;
  double timeout_s = 30.0;
};

struct BlaConfig {
  std::size_t realizations = 0;
  std::uint64_t seed = 0;
  double oob_ratio = 1.0;
  double gain_floor_relative = 1e-6;
};

struct IlcSection {
  IlcConfig loop;
  DesiredOutputMode desired = BlaReference{};
  /// Repeated measurements of the final input used for a noise-floor
  /// estimate; 0 disables it.
  std::size_t noise_floor_repeats = 0;
  bool dump_iterations = false;
};

struct GmpSection {
  std::vector<GmpOrders> orders;
  double ridge = 0.0;
  double tie_relative = 0.01;
  bool odd_only = false;
};

struct ExperimentConfig {
  SignalConfig signal;
  PlantConfig plant;
  BlaConfig bla;
  IlcSection ilc;
  GmpSection gmp;
  std::string output_dir;

  /// Throws Error(Config) naming the offending key.
  void validate() const;
};

/// INI with sections [signal] [plant] [bla] [ilc] [gmp] [output]. Unknown
/// sections or keys are rejected; missing required keys are reported by
/// name. Throws Error(Config) or Error(Io).
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

/// Canonical INI text: every key, fixed order, round-trip exact numbers.
std::string to_ini(const ExperimentConfig& config);
/// 64-bit FNV-1a of to_ini(config) without the output directory, as 16
/// hex digits.
std::string fingerprint(const ExperimentConfig& config);

struct RunOptions {
  /// Overrides config.output_dir when set.
  std::optional<std::filesystem::path> out;
  bool force = false;
  std::optional<std::uint64_t> seed_override;
  /// Progress and warnings; nullptr silences them.
  std::ostream* log = nullptr;
};

/// Applies seed_override and the out directory to a copy of the config.
ExperimentConfig resolve(ExperimentConfig config, const RunOptions& options);

/// Local surrogate or remote plant per the config.
std::unique_ptr<Plant> make_plant(const PlantConfig& config);
/// The surrogate described by the config (preset plus overrides).
SurrogatePa make_surrogate(const PlantConfig& config);

FrequencyGrid make_grid(const SignalConfig& config);
/// Reference realization with the given seed; bounds as in the config.
GeneratedSignal make_reference(const SignalConfig& config, std::uint64_t seed,
                               const std::optional<std::pair<double, double>>&
                                   papr_bounds);

void cmd_bla(const ExperimentConfig& config, const RunOptions& options);
void cmd_ilc(const ExperimentConfig& config, const RunOptions& options);
void cmd_fit(const ExperimentConfig& config, const RunOptions& options);
ValidationReport cmd_validate(const ExperimentConfig& config,
                              const RunOptions& options);
ValidationReport cmd_full(const ExperimentConfig& config,
                          const RunOptions& options);

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitPlant = 3,
  kExitNumerical = 4,
  kExitIo = 5,
};

int exit_code(ErrorKind kind);

}  // namespace ilcdpd
