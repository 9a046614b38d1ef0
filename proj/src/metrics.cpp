#include "ilcdpd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ilcdpd/error.hpp"

namespace ilcdpd {

namespace {

void require_same_length(const Signal& a, const Signal& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + ": length mismatch");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace

double nrmse(const Signal& y_d, const Signal& y_c) {
  require_same_length(y_d, y_c, "nrmse");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < y_d.size(); ++t) {
    num += std::norm(y_d[t] - y_c[t]);
    den += std::norm(y_d[t]);
  }
  if (den == 0.0) {
    throw Error(ErrorKind::UndefinedStatistic,
                "nrmse is undefined for an all-zero desired output");
  }
  return std::sqrt(num / den);
}

std::vector<double> error_spectrum_db(const Signal& y_d, const Signal& y_c) {
  require_same_length(y_d, y_c, "error_spectrum_db");
  std::vector<cplx> diff(y_d.size());
  for (std::size_t t = 0; t < diff.size(); ++t) diff[t] = y_d[t] - y_c[t];
  const Spectrum e = dft(y_d.with_samples(std::move(diff)));
  const Spectrum d = dft(y_d);
  double peak = 0.0;
  for (const auto& v : d.bins()) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) peak = 1.0;
  std::vector<double> out(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double mag = std::abs(e[k]);
    out[k] = mag == 0.0 ? kDbFloor : amplitude_db(mag / peak);
  }
  return out;
}

NoiseFloorEstimate noise_floor(std::span<const Signal> repetitions) {
  if (repetitions.size() < 2) {
    throw Error(ErrorKind::InvalidInput,
                "noise floor needs at least 2 repeated measurements");
  }
  const std::size_t n = repetitions[0].size();
  std::vector<Spectrum> specs;
  specs.reserve(repetitions.size());
  for (const auto& s : repetitions) {
    if (s.size() != n) {
      throw Error(ErrorKind::InvalidInput, "noise floor: length mismatch");
    }
    specs.push_back(dft(s));
  }
  std::vector<double> power(n, 0.0);
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < specs.size(); ++a) {
    for (std::size_t b = a + 1; b < specs.size(); ++b) {
      for (std::size_t k = 0; k < n; ++k) {
        power[k] += 0.5 * std::norm(specs[a][k] - specs[b][k]);
      }
      ++pairs;
    }
  }
  NoiseFloorEstimate est;
  est.method = "repeat-difference";
  est.per_bin_db.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    est.per_bin_db[k] = power_db(power[k] / static_cast<double>(pairs));
  }
  return est;
}

double mean_floor_db(const NoiseFloorEstimate& floor,
                     std::span<const std::size_t> bins) {
  if (bins.empty()) {
    throw Error(ErrorKind::InvalidInput, "mean_floor_db: no bins");
  }
  double acc = 0.0;
  for (auto k : bins) {
    const double db = floor.per_bin_db.at(k);
    acc += db <= kDbFloor ? 0.0 : std::pow(10.0, db / 10.0);
  }
  return power_db(acc / static_cast<double>(bins.size()));
}

std::vector<CurvePoint> convergence_curve(const IlcTrajectory& traj) {
  if (traj.error_norms.empty()) {
    throw Error(ErrorKind::InvalidInput, "empty ILC trajectory");
  }
  const double ref = traj.desired_norm > 0.0 ? traj.desired_norm : 1.0;
  std::vector<CurvePoint> out;
  out.reserve(traj.error_norms.size());
  for (std::size_t j = 0; j < traj.error_norms.size(); ++j) {
    out.push_back({j, amplitude_db(traj.error_norms[j] / ref)});
  }
  return out;
}

std::size_t plateau_iteration(std::span<const CurvePoint> curve,
                              double tolerance_db, double floor_db) {
  if (curve.empty()) {
    throw Error(ErrorKind::InvalidInput, "empty convergence curve");
  }
  std::vector<double> tail_min(curve.size());
  double m = curve.back().error_db;
  for (std::size_t i = curve.size(); i-- > 0;) {
    m = std::min(m, curve[i].error_db);
    tail_min[i] = m;
  }
  for (std::size_t j = 0; j < curve.size(); ++j) {
    if (curve[j].error_db <= floor_db ||
        curve[j].error_db - tail_min[j] <= tolerance_db) {
      return curve[j].iteration;
    }
  }
  return curve.back().iteration;
}

const CaseResult& ValidationReport::find(const std::string& name) const {
  for (const auto& c : cases) {
    if (c.name == name) return c;
  }
  throw Error(ErrorKind::InvalidInput, "no validation case named " + name);
}

void write_report_summary(const ValidationReport& report,
                          const std::filesystem::path& path) {
  auto out = open_out(path);
  char line[160];
  out << "fingerprint = " << report.fingerprint << "\n";
  std::snprintf(line, sizeof line, "validation_papr_db = %.17e\n",
                report.papr_db);
  out << line;
  const CaseResult* best = nullptr;
  for (const auto& c : report.cases) {
    std::snprintf(line, sizeof line, "nrmse_%s = %.17e\n", c.name.c_str(),
                  c.nrmse);
    out << line;
    if (c.name != "uncompensated" && (!best || c.nrmse < best->nrmse)) {
      best = &c;
    }
  }
  for (const auto& c : report.cases) {
    if (c.name == "uncompensated") continue;
    const double base = report.find("uncompensated").nrmse;
    std::snprintf(line, sizeof line, "improvement_%s = %.17e\n",
                  c.name.c_str(), c.nrmse > 0.0 ? base / c.nrmse : 0.0);
    out << line;
  }
  if (best) out << "best_inverse = " << best->name << "\n";
  if (!report.summary_notes.empty()) out << report.summary_notes;
  finish(out, path);
}

void write_nrmse_csv(const ValidationReport& report,
                     const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "case,nrmse\n";
  char line[128];
  for (const auto& c : report.cases) {
    std::snprintf(line, sizeof line, "%s,%.17e\n", c.name.c_str(), c.nrmse);
    out << line;
  }
  finish(out, path);
}

void write_error_spectra_csv(const ValidationReport& report, std::size_t n,
                             double sample_rate_hz,
                             const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "bin,freq_hz";
  for (const auto& c : report.cases) {
    if (c.error_spectrum_db.size() != n) {
      throw Error(ErrorKind::InvalidInput,
                  "error spectrum of case " + c.name + " has the wrong length");
    }
    out << "," << c.name;
  }
  out << "\n";
  char buf[64];
  for (std::size_t k = 0; k < n; ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17e", k,
                  bin_frequency_hz(k, n, sample_rate_hz));
    out << buf;
    for (const auto& c : report.cases) {
      std::snprintf(buf, sizeof buf, ",%.17e", c.error_spectrum_db[k]);
      out << buf;
    }
    out << "\n";
  }
  finish(out, path);
}

void write_curve_csv(std::span<const CurvePoint> curve,
                     const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "iteration,error_db\n";
  char line[64];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof line, "%zu,%.17e\n", p.iteration, p.error_db);
    out << line;
  }
  finish(out, path);
}

}  // namespace ilcdpd
