#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ilcdpd/ilc.hpp"
#include "ilcdpd/signal.hpp"

namespace ilcdpd {

/// sqrt(sum|y_d - y_c|^2 / sum|y_d|^2). Throws UndefinedStatistic when y_d is
/// all zero.
double nrmse(const Signal& y_d, const Signal& y_c);

/// 20 log10 |DFT(y_d - y_c)[k]| / max_k |Y_d[k]| (dBc), exact zeros at
/// kDbFloor. A zero y_d falls back to an unnormalized scale.
std::vector<double> error_spectrum_db(const Signal& y_d, const Signal& y_c);

struct NoiseFloorEstimate {
  std::vector<double> per_bin_db;  // 10 log10 of the per-bin noise power
  std::string method;
};

/// Repeat-difference estimator: |Y_a[k] - Y_b[k]|^2 / 2 averaged over all
/// pairs of repetitions. Power is in DFT units (sum over t of |n|^2 spreads
/// as N sigma^2 per bin for white noise).
NoiseFloorEstimate noise_floor(std::span<const Signal> repetitions);

/// Mean of the estimate over `bins`, in dB.
double mean_floor_db(const NoiseFloorEstimate& floor,
                     std::span<const std::size_t> bins);

struct CurvePoint {
  std::size_t iteration;
  double error_db;  // 20 log10(error_norm / desired_norm)
};

std::vector<CurvePoint> convergence_curve(const IlcTrajectory& traj);

/// First iteration j whose error is within `tolerance_db` of the best error
/// reached at any later iteration (including j), or at or below `floor_db`.
std::size_t plateau_iteration(std::span<const CurvePoint> curve,
                              double tolerance_db = 1.0,
                              double floor_db = -200.0);

struct CaseResult {
  std::string name;
  double nrmse = 0.0;
  std::vector<double> error_spectrum_db;
};

struct ValidationReport {
  std::vector<CaseResult> cases;  // uncompensated, postinverse, preinverse
  double papr_db = 0.0;
  std::string fingerprint;
  std::string summary_notes;

  const CaseResult& find(const std::string& name) const;
};

/// summary.txt: key = value lines with every scalar metric.
void write_report_summary(const ValidationReport& report,
                          const std::filesystem::path& path);
/// nrmse.csv: case,nrmse
void write_nrmse_csv(const ValidationReport& report,
                     const std::filesystem::path& path);
/// error_spectra.csv: bin,freq_hz,<case>... one column per case.
void write_error_spectra_csv(const ValidationReport& report, std::size_t n,
                             double sample_rate_hz,
                             const std::filesystem::path& path);
/// Two-column "iteration,error_db" file.
void write_curve_csv(std::span<const CurvePoint> curve,
                     const std::filesystem::path& path);

}  // namespace ilcdpd
