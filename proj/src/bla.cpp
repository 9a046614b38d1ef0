#include "ilcdpd/bla.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ilcdpd/error.hpp"
#include "ilcdpd/rng.hpp"

namespace ilcdpd {

cplx FrfEstimate::at(std::size_t k) const {
  const auto bins = grid.controlled_bins();
  const auto it = std::lower_bound(bins.begin(), bins.end(), k);
  if (it == bins.end() || *it != k) {
    throw Error(ErrorKind::InvalidInput,
                "bin " + std::to_string(k) + " is not in the FRF grid");
  }
  return g_bla[static_cast<std::size_t>(it - bins.begin())];
}

FrfEstimate estimate_bla(std::span<const Signal> inputs,
                         std::span<const Signal> outputs,
                         const FrequencyGrid& grid) {
  const std::size_t m = inputs.size();
  if (m < 2 || outputs.size() != m) {
    throw Error(ErrorKind::InvalidInput,
                "BLA needs at least 2 realizations with matching outputs");
  }
  const auto bins = grid.controlled_bins();
  std::vector<std::vector<cplx>> ratios(bins.size(), std::vector<cplx>(m));
  for (std::size_t r = 0; r < m; ++r) {
    if (inputs[r].size() != grid.n() || outputs[r].size() != grid.n()) {
      throw Error(ErrorKind::InvalidInput,
                  "realization " + std::to_string(r) +
                      " length does not match the grid");
    }
    const Spectrum u = dft(inputs[r]);
    const Spectrum y = dft(outputs[r]);
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const cplx ui = u[bins[i]];
      if (std::abs(ui) < 1e-12) {
        throw Error(ErrorKind::DegenerateExcitation,
                    "realization " + std::to_string(r) + " does not excite bin " +
                        std::to_string(bins[i]));
      }
      ratios[i][r] = y[bins[i]] / ui;
    }
  }
  FrfEstimate frf{grid, std::vector<cplx>(bins.size()),
                  std::vector<double>(bins.size()), m,
                  inputs[0].sample_rate_hz()};
  const auto md = static_cast<double>(m);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    cplx mean{};
    for (const auto& v : ratios[i]) mean += v;
    mean /= md;
    double ss = 0.0;
    for (const auto& v : ratios[i]) ss += std::norm(v - mean);
    frf.g_bla[i] = mean;
    frf.variance[i] = ss / (md - 1.0) / md;
  }
  return frf;
}

FrfEstimate estimate_bla(Plant& plant, const MultisineSpec& spec,
                         std::size_t m_realizations) {
  if (m_realizations < 2) {
    throw Error(ErrorKind::InvalidInput, "BLA needs at least 2 realizations");
  }
  const auto controlled = spec.grid.controlled_bins();
  for (auto k : controlled) {
    if (!spec.grid.is_excited(k)) {
      throw Error(ErrorKind::DegenerateExcitation,
                  "multisine does not excite controlled bin " +
                      std::to_string(k));
    }
  }
  std::vector<Signal> inputs;
  std::vector<Signal> outputs;
  for (std::size_t r = 0; r < m_realizations; ++r) {
    MultisineSpec realization = spec;
    realization.seed = derive_seed(spec.seed, r);
    inputs.push_back(gen_multisine(realization));
    outputs.push_back(plant.apply(inputs.back()));
  }
  return estimate_bla(inputs, outputs, spec.grid);
}

double default_gain_floor(const FrfEstimate& frf, double relative) {
  double peak = 0.0;
  for (const auto& g : frf.g_bla) peak = std::max(peak, std::abs(g));
  return relative * peak;
}

LearningFilter invert_frf(const FrfEstimate& frf, double gain_floor) {
  if (!(gain_floor > 0.0)) {
    throw Error(ErrorKind::InvalidInput, "gain floor must be positive");
  }
  const auto bins = frf.grid.controlled_bins();
  std::vector<std::size_t> dropped;
  std::vector<cplx> l;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (std::abs(frf.g_bla[i]) < gain_floor) {
      dropped.push_back(bins[i]);
    } else {
      l.push_back(1.0 / frf.g_bla[i]);
    }
  }
  if (l.empty()) {
    throw Error(ErrorKind::UnusableBla,
                "every BLA bin lies below the gain floor");
  }
  return LearningFilter{frf.grid.without(dropped), std::move(l), gain_floor,
                        std::move(dropped)};
}

void write_frf_csv(const FrfEstimate& frf, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  char line[160];
  std::snprintf(line, sizeof line, "# n=%zu fs=%.17e realizations=%zu\n",
                frf.grid.n(), frf.sample_rate_hz, frf.n_realizations);
  out << line << "bin_index,freq_hz,re,im,variance\n";
  const auto bins = frf.grid.controlled_bins();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17e,%.17e,%.17e,%.17e\n", bins[i],
                  bin_frequency_hz(bins[i], frf.grid.n(), frf.sample_rate_hz),
                  frf.g_bla[i].real(), frf.g_bla[i].imag(), frf.variance[i]);
    out << line;
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

FrfEstimate read_frf_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t n = 0;
  std::size_t m = 0;
  double fs = 0.0;
  if (std::sscanf(header.c_str(), "# n=%zu fs=%lf realizations=%zu", &n, &fs,
                  &m) != 3) {
    throw Error(ErrorKind::Io, "bad FRF header in " + path.string());
  }
  std::string line;
  std::getline(in, line);  // column names
  std::vector<std::size_t> bins;
  std::vector<cplx> g;
  std::vector<double> var;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t k = 0;
    double f = 0.0;
    double re = 0.0;
    double im = 0.0;
    double v = 0.0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &k, &f, &re, &im,
                    &v) != 5) {
      throw Error(ErrorKind::Io, "bad FRF row in " + path.string());
    }
    bins.push_back(k);
    g.emplace_back(re, im);
    var.push_back(v);
  }
  FrequencyGrid grid(n, bins, bins);
  return FrfEstimate{std::move(grid), std::move(g), std::move(var), m, fs};
}

}  // namespace ilcdpd
