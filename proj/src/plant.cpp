#include "ilcdpd/plant.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ilcdpd/error.hpp"
#include "ilcdpd/rng.hpp"

namespace ilcdpd {

std::vector<cplx> circular_fir(std::span<const cplx> taps,
                               std::span<const cplx> x) {
  const std::size_t n = x.size();
  std::vector<cplx> y(n);
  for (std::size_t t = 0; t < n; ++t) {
    cplx acc{};
    for (std::size_t i = 0; i < taps.size(); ++i) {
      acc += taps[i] * x[(t + n - i % n) % n];
    }
    y[t] = acc;
  }
  return y;
}

PlantResponse surrogate_apply(const SurrogatePa& pa, const Signal& u,
                              std::uint64_t call_index) {
  if (pa.prefilter.empty()) {
    throw Error(ErrorKind::InvalidInput, "surrogate prefilter has no taps");
  }
  if (!(pa.noise_std >= 0.0)) {
    throw Error(ErrorKind::InvalidInput, "noise std must be nonnegative");
  }
  std::vector<cplx> x(u.samples().begin(), u.samples().end());
  bool clipped = false;
  if (pa.saturation_limit) {
    const double limit = *pa.saturation_limit;
    for (auto& v : x) {
      const double mag = std::abs(v);
      if (mag > limit) {
        v *= limit / mag;
        clipped = true;
      }
    }
  }
  std::vector<cplx> y = evaluate_gmp(pa.forward, circular_fir(pa.prefilter, x));
  if (pa.noise_std > 0.0) {
    Rng rng(derive_seed(pa.noise_seed, call_index));
    for (auto& v : y) v += pa.noise_std * rng.complex_normal();
  }
  for (const auto& v : y) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw Error(ErrorKind::PlantDiverged, "surrogate output is non-finite (input too large for the model)");
    }
  }
  return PlantResponse{u.with_samples(std::move(y)), clipped};
}

Signal SurrogatePlant::apply(const Signal& input) {
  return surrogate_apply(pa_, input, calls_.fetch_add(1)).output;
}

SurrogatePa mild_preset() {
  SurrogatePa pa;
  pa.preset_id = "mild-v1";
  pa.prefilter = {{1.0, 0.0}, {0.12, -0.05}, {-0.04, 0.025}};
  GmpModel f(GmpOrders{2, 3, 1});
  f.alpha(0, 0, 0) = {1.0, 0.0};
  f.alpha(1, 0, 0) = {0.05, 0.03};
  f.alpha(2, 0, 0) = {-0.02, 0.01};
  // Gain expansion at mid envelope, compression towards the peaks, AM/PM.
  f.alpha(0, 1, 0) = {-0.0003, 0.066};
  f.alpha(0, 2, 0) = {0.0372, 0.0133};
  f.alpha(0, 3, 0) = {-0.0092, -0.0077};
  f.alpha(1, 2, 0) = {0.004, -0.002};
  f.alpha(0, 2, 1) = {-0.003, 0.002};
  f.beta(0, 2, 1) = {0.002, -0.001};
  f.beta(1, 2, 1) = {-0.001, 0.0005};
  pa.forward = f;
  return pa;
}

SurrogatePa linear_preset(std::vector<cplx> fir) {
  SurrogatePa pa;
  pa.preset_id = "linear-fir";
  pa.prefilter = std::move(fir);
  pa.forward = GmpModel::gain(1.0);
  return pa;
}

namespace {

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      lines.push_back(line);
    }
  }
  return lines;
}

SurrogatePa parse_preset(std::istream& in, const std::string& origin) {
  auto lines = read_lines(in);
  if (lines.empty() || lines.front().rfind("ilcdpd-preset 1", 0) != 0) {
    throw Error(ErrorKind::Io, "not a version-1 preset: " + origin);
  }
  SurrogatePa pa;
  pa.prefilter.clear();
  std::vector<std::string> gmp_lines;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    std::string key;
    ls >> key;
    bool ok = true;
    if (key == "id") {
      ok = static_cast<bool>(ls >> pa.preset_id);
    } else if (key == "prefilter") {
      double re = 0.0;
      double im = 0.0;
      ok = static_cast<bool>(ls >> re >> im);
      pa.prefilter.emplace_back(re, im);
    } else if (key == "noise_std") {
      ok = static_cast<bool>(ls >> pa.noise_std);
    } else if (key == "noise_seed") {
      ok = static_cast<bool>(ls >> pa.noise_seed);
    } else if (key == "saturation") {
      double s = 0.0;
      ok = static_cast<bool>(ls >> s) && s > 0.0;
      pa.saturation_limit = s;
    } else if (key == "orders" || key == "alpha" || key == "beta") {
      gmp_lines.push_back(lines[i]);
    } else {
      throw Error(ErrorKind::Io,
                  "unknown preset key '" + key + "' in " + origin);
    }
    if (!ok) throw Error(ErrorKind::Io, "bad preset line: " + lines[i]);
  }
  if (pa.prefilter.empty()) {
    throw Error(ErrorKind::Io, "preset has no prefilter taps: " + origin);
  }
  pa.forward = parse_gmp_body(gmp_lines);
  return pa;
}

}  // namespace

SurrogatePa read_preset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open preset " + path.string());
  return parse_preset(in, path.string());
}

void write_preset(const SurrogatePa& pa, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  char line[128];
  out << "ilcdpd-preset 1\n";
  out << "id " << pa.preset_id << "\n";
  for (const auto& h : pa.prefilter) {
    std::snprintf(line, sizeof line, "prefilter %.17e %.17e\n", h.real(),
                  h.imag());
    out << line;
  }
  std::snprintf(line, sizeof line, "noise_std %.17e\n", pa.noise_std);
  out << line << "noise_seed " << pa.noise_seed << "\n";
  if (pa.saturation_limit) {
    std::snprintf(line, sizeof line, "saturation %.17e\n",
                  *pa.saturation_limit);
    out << line;
  }
  out << format_gmp_body(pa.forward);
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

SurrogatePa load_preset(const std::string& spec) {
  if (spec == "builtin:mild-v1") return mild_preset();
  if (spec.rfind("builtin:", 0) == 0) {
    throw Error(ErrorKind::Config, "unknown builtin preset '" + spec + "'");
  }
  return read_preset(spec);
}

}  // namespace ilcdpd
