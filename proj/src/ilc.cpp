#include "ilcdpd/ilc.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ilcdpd/error.hpp"

namespace ilcdpd {

void IlcConfig::validate() const {
  if (max_iterations < 1) {
    throw Error(ErrorKind::InvalidInput, "max_iterations must be >= 1");
  }
  if (!(relaxation > 0.0 && relaxation <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "relaxation must lie in (0, 1]");
  }
  if (!(stop_tolerance >= 0.0)) {
    throw Error(ErrorKind::InvalidInput, "stop_tolerance must be >= 0");
  }
  if (!(divergence_factor > 1.0)) {
    throw Error(ErrorKind::InvalidInput, "divergence_factor must be > 1");
  }
  if (averaging < 1) {
    throw Error(ErrorKind::InvalidInput, "averaging must be >= 1");
  }
}

namespace {

cplx desired_gain_at(const DesiredOutputMode& mode, const FrfEstimate& frf,
                     std::size_t index) {
  if (const auto* g = std::get_if<ConstantGain>(&mode)) {
    if (g->gain == cplx{} || !std::isfinite(std::abs(g->gain))) {
      throw Error(ErrorKind::InvalidInput, "desired gain must be finite, nonzero");
    }
    return g->gain;
  }
  return frf.g_bla[index];
}

void check_same_length(const Spectrum& a, const Spectrum& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + ": length mismatch");
  }
}

}  // namespace

Spectrum make_desired(const Signal& r, const DesiredOutputMode& mode,
                      const FrfEstimate& frf) {
  if (r.size() != frf.grid.n()) {
    throw Error(ErrorKind::InvalidInput,
                "reference length " + std::to_string(r.size()) +
                    " does not match FRF grid length " +
                    std::to_string(frf.grid.n()));
  }
  const Spectrum rs = dft(r);
  std::vector<cplx> yd(r.size());
  const auto bins = frf.grid.controlled_bins();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    yd[bins[i]] = desired_gain_at(mode, frf, i) * rs[bins[i]];
  }
  return rs.with_bins(std::move(yd));
}

Signal remove_desired_gain(const Signal& y, const DesiredOutputMode& mode,
                           const FrfEstimate& frf) {
  if (y.size() != frf.grid.n()) {
    throw Error(ErrorKind::InvalidInput, "signal length does not match FRF grid");
  }
  const Spectrum ys = dft(y);
  std::vector<cplx> out(y.size());
  const auto bins = frf.grid.controlled_bins();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const cplx g = desired_gain_at(mode, frf, i);
    if (g != cplx{}) out[bins[i]] = ys[bins[i]] / g;
  }
  return idft(ys.with_bins(std::move(out)));
}

Spectrum ilc_step(const Spectrum& u, const Spectrum& y, const Spectrum& y_d,
                  const LearningFilter& filter, double relaxation) {
  check_same_length(u, y, "ilc_step");
  check_same_length(u, y_d, "ilc_step");
  if (u.size() != filter.grid.n()) {
    throw Error(ErrorKind::InvalidInput, "ilc_step: filter grid length mismatch");
  }
  if (!(relaxation > 0.0 && relaxation <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "relaxation must lie in (0, 1]");
  }
  std::vector<cplx> next(u.bins().begin(), u.bins().end());
  const auto bins = filter.grid.controlled_bins();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const std::size_t k = bins[i];
    const cplx e = y_d[k] - y[k];
    const cplx v = u[k] + relaxation * filter.l[i] * e;
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw Error(ErrorKind::Divergence,
                  "ILC update is non-finite at bin " + std::to_string(k));
    }
    next[k] = v;
  }
  return u.with_bins(std::move(next));
}

double rms_over(const Spectrum& x, std::span<const std::size_t> bins) {
  if (bins.empty()) return 0.0;
  double acc = 0.0;
  for (auto k : bins) acc += std::norm(x[k]);
  return std::sqrt(acc / static_cast<double>(bins.size()));
}

namespace {

Signal measure(Plant& plant, const Signal& u, int averaging) {
  if (averaging == 1) return plant.apply(u);
  std::vector<cplx> acc(u.size());
  for (int a = 0; a < averaging; ++a) {
    const Signal y = plant.apply(u);
    if (y.size() != u.size()) {
      throw Error(ErrorKind::PlantDiverged, "plant changed the signal length");
    }
    for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += y[t];
  }
  for (auto& v : acc) v /= static_cast<double>(averaging);
  return u.with_samples(std::move(acc));
}

}  // namespace

IlcTrajectory run_ilc(Plant& plant, const Signal& r, const Spectrum& y_d,
                      const LearningFilter& filter, const IlcConfig& config) {
  config.validate();
  if (r.size() != y_d.size() || r.size() != filter.grid.n()) {
    throw Error(ErrorKind::InvalidInput,
                "reference, desired output and filter lengths differ");
  }
  const auto bins = filter.grid.controlled_bins();
  IlcTrajectory traj;
  traj.desired_norm = rms_over(y_d, bins);
  traj.inputs.push_back(r);
  double best = 0.0;
  for (int j = 0;; ++j) {
    const Signal& u = traj.inputs.back();
    Signal y = [&] {
      try {
        return measure(plant, u, config.averaging);
      } catch (const Error& e) {
        throw Error(e.kind(), "ILC iteration " + std::to_string(j) + ": " +
                                  e.what());
      }
    }();
    if (y.size() != u.size()) {
      throw Error(ErrorKind::PlantDiverged,
                  "ILC iteration " + std::to_string(j) +
                      ": plant changed the signal length");
    }
    const Spectrum ys = dft(y);
    traj.outputs.push_back(std::move(y));

    std::vector<cplx> err(ys.size());
    for (auto k : bins) err[k] = y_d[k] - ys[k];
    const double norm = rms_over(ys.with_bins(std::move(err)), bins);
    traj.error_norms.push_back(norm);

    if (j == 0 || norm < best) {
      best = norm;
      traj.best_index = static_cast<std::size_t>(j);
    }
    if (norm <= config.stop_tolerance * traj.desired_norm) {
      traj.converged = true;
      break;
    }
    if (norm > config.divergence_factor * best) {
      traj.diverged = true;
      break;
    }
    if (j == config.max_iterations) break;

    const Spectrum next = ilc_step(dft(u), ys, y_d, filter, config.relaxation);
    traj.inputs.push_back(idft(next));
  }
  return traj;
}

CompensationError compensation_error(const Spectrum& y_d, const Spectrum& y_c,
                                     const FrequencyGrid& grid) {
  check_same_length(y_d, y_c, "compensation_error");
  if (y_d.size() != grid.n()) {
    throw Error(ErrorKind::InvalidInput, "compensation_error: grid length mismatch");
  }
  CompensationError out;
  out.per_bin_db.resize(y_d.size());
  std::vector<cplx> diff(y_d.size());
  for (std::size_t k = 0; k < diff.size(); ++k) {
    diff[k] = y_d[k] - y_c[k];
    out.per_bin_db[k] = amplitude_db(std::abs(diff[k]));
  }
  out.rms = rms_over(y_d.with_bins(std::move(diff)), grid.controlled_bins());
  return out;
}

void write_trajectory_csv(const IlcTrajectory& traj,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "iteration,error_rms,error_rms_db\n";
  char line[96];
  for (std::size_t j = 0; j < traj.error_norms.size(); ++j) {
    const double rel = traj.desired_norm > 0.0
                           ? traj.error_norms[j] / traj.desired_norm
                           : traj.error_norms[j];
    std::snprintf(line, sizeof line, "%zu,%.17e,%.17e\n", j,
                  traj.error_norms[j], amplitude_db(rel));
    out << line;
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace ilcdpd
