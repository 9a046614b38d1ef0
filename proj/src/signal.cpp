#include "ilcdpd/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "ilcdpd/error.hpp"

namespace ilcdpd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::UndefinedStatistic: return "undefined-statistic";
    case ErrorKind::GenerationFailed: return "generation-failed";
    case ErrorKind::DegenerateExcitation: return "degenerate-excitation";
    case ErrorKind::UnusableBla: return "unusable-bla";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::IllConditioned: return "ill-conditioned";
    case ErrorKind::PlantDiverged: return "plant-diverged";
    case ErrorKind::Connection: return "connection";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::RemoteError: return "remote-error";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

namespace {

void check_finite(std::span<const cplx> x, const char* what) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i].real()) || !std::isfinite(x[i].imag())) {
      throw Error(ErrorKind::InvalidInput, std::string(what) +
                                               ": non-finite value at index " +
                                               std::to_string(i));
    }
  }
}

void check_rate(double sample_rate_hz, double carrier_hz) {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw Error(ErrorKind::InvalidInput, "sample rate must be positive");
  }
  if (!(carrier_hz >= 0.0) || !std::isfinite(carrier_hz)) {
    throw Error(ErrorKind::InvalidInput, "carrier must be nonnegative");
  }
}

// FFTW plans are created once per (length, direction) on aligned scratch
// buffers and then executed through the new-array interface, which is
// thread-safe. Planning itself is serialized.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }

  void execute(std::span<const cplx> in, std::span<cplx> out, int sign) {
    const std::size_t n = in.size();
    auto in_buf = make_buffer(n);
    auto out_buf = make_buffer(n);
    std::copy(in.begin(), in.end(),
              reinterpret_cast<cplx*>(in_buf.get()));
    fftw_execute_dft(plan(n, sign), in_buf.get(), out_buf.get());
    const auto* res = reinterpret_cast<const cplx*>(out_buf.get());
    std::copy(res, res + n, out.begin());
  }

  ~FftPlans() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
  };
  using Buffer = std::unique_ptr<fftw_complex[], FftwFree>;

  static Buffer make_buffer(std::size_t n) {
    return Buffer(fftw_alloc_complex(n));
  }

  fftw_plan plan(std::size_t n, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    auto in = make_buffer(n);
    auto out = make_buffer(n);
    fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(),
                                   sign, FFTW_ESTIMATE);
    plans_.emplace(key, p);
    return p;
  }

  std::mutex mutex_;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

}  // namespace

Signal::Signal(std::vector<cplx> samples, double sample_rate_hz,
               double carrier_hz)
    : samples_(std::move(samples)),
      sample_rate_hz_(sample_rate_hz),
      carrier_hz_(carrier_hz) {
  if (samples_.size() < 2) {
    throw Error(ErrorKind::InvalidInput, "signal needs at least 2 samples");
  }
  check_rate(sample_rate_hz_, carrier_hz_);
  check_finite(samples_, "signal");
}

Spectrum::Spectrum(std::vector<cplx> bins, double sample_rate_hz,
                   double carrier_hz)
    : bins_(std::move(bins)),
      sample_rate_hz_(sample_rate_hz),
      carrier_hz_(carrier_hz) {
  if (bins_.empty()) {
    throw Error(ErrorKind::InvalidInput, "spectrum is empty");
  }
  check_rate(sample_rate_hz_, carrier_hz_);
  check_finite(bins_, "spectrum");
}

namespace {

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v,
                                       std::size_t n, const char* what) {
  std::sort(v.begin(), v.end());
  if (std::adjacent_find(v.begin(), v.end()) != v.end()) {
    throw Error(ErrorKind::InvalidInput,
                std::string(what) + " contains duplicate bins");
  }
  if (!v.empty() && v.back() >= n) {
    throw Error(ErrorKind::InvalidInput,
                std::string(what) + " bin " + std::to_string(v.back()) +
                    " out of range");
  }
  return v;
}

}  // namespace

FrequencyGrid::FrequencyGrid(std::size_t n, std::vector<std::size_t> excited,
                             std::vector<std::size_t> controlled)
    : n_(n),
      excited_(sorted_unique(std::move(excited), n, "excited set")),
      controlled_(sorted_unique(std::move(controlled), n, "controlled set")) {
  if (n_ < 2) throw Error(ErrorKind::InvalidInput, "grid needs N >= 2");
  if (!std::includes(controlled_.begin(), controlled_.end(), excited_.begin(),
                     excited_.end())) {
    throw Error(ErrorKind::InvalidInput,
                "excited bins must be a subset of the controlled bins");
  }
}

FrequencyGrid FrequencyGrid::from_bands(std::size_t n, long excited_lo,
                                        long excited_hi, long controlled_lo,
                                        long controlled_hi) {
  auto range = [n](long lo, long hi, const char* what) {
    if (hi < lo) {
      throw Error(ErrorKind::InvalidInput,
                  std::string(what) + " band has hi < lo");
    }
    if (hi - lo + 1 > static_cast<long>(n)) {
      throw Error(ErrorKind::InvalidInput,
                  std::string(what) + " band wider than N");
    }
    std::vector<std::size_t> bins;
    for (long b = lo; b <= hi; ++b) bins.push_back(wrap_bin(b, n));
    return bins;
  };
  return FrequencyGrid(n, range(excited_lo, excited_hi, "excited"),
                       range(controlled_lo, controlled_hi, "controlled"));
}

bool FrequencyGrid::is_excited(std::size_t k) const {
  return std::binary_search(excited_.begin(), excited_.end(), k);
}

bool FrequencyGrid::is_controlled(std::size_t k) const {
  return std::binary_search(controlled_.begin(), controlled_.end(), k);
}

FrequencyGrid FrequencyGrid::without(std::span<const std::size_t> bins) const {
  auto keep = [&](const std::vector<std::size_t>& set) {
    std::vector<std::size_t> out;
    for (auto k : set) {
      if (std::find(bins.begin(), bins.end(), k) == bins.end()) {
        out.push_back(k);
      }
    }
    return out;
  };
  return FrequencyGrid(n_, keep(excited_), keep(controlled_));
}

std::size_t wrap_bin(long signed_bin, std::size_t n) {
  const long nn = static_cast<long>(n);
  return static_cast<std::size_t>(((signed_bin % nn) + nn) % nn);
}

long signed_bin(std::size_t k, std::size_t n) {
  return k > n / 2 ? static_cast<long>(k) - static_cast<long>(n)
                   : static_cast<long>(k);
}

double bin_frequency_hz(std::size_t k, std::size_t n, double sample_rate_hz) {
  return static_cast<double>(signed_bin(k, n)) * sample_rate_hz /
         static_cast<double>(n);
}

Spectrum dft(const Signal& signal) {
  std::vector<cplx> out(signal.size());
  FftPlans::instance().execute(signal.samples(), out, FFTW_FORWARD);
  return Spectrum(std::move(out), signal.sample_rate_hz(),
                  signal.carrier_hz());
}

Signal idft(const Spectrum& spectrum) {
  std::vector<cplx> out(spectrum.size());
  FftPlans::instance().execute(spectrum.bins(), out, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
  return Signal(std::move(out), spectrum.sample_rate_hz(),
                spectrum.carrier_hz());
}

double mean_power(std::span<const cplx> x) {
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

double papr_db(const Signal& signal) {
  double peak = 0.0;
  for (const auto& v : signal.samples()) peak = std::max(peak, std::norm(v));
  const double mean = mean_power(signal.samples());
  if (mean == 0.0) {
    throw Error(ErrorKind::UndefinedStatistic, "PAPR of an all-zero signal");
  }
  // Guard the constant-envelope case against rounding below 0 dB.
  return std::max(0.0, 10.0 * std::log10(peak / mean));
}

double rms_power_db(const Signal& signal) {
  return power_db(mean_power(signal.samples()));
}

double rms_power_dbm(const Signal& signal, double load_ohm) {
  const double p = mean_power(signal.samples());
  if (p == 0.0) return kDbFloor;
  return 10.0 * std::log10(p / (2.0 * load_ohm) / 1e-3);
}

double amplitude_db(double magnitude) {
  return magnitude == 0.0 ? kDbFloor : 20.0 * std::log10(magnitude);
}

double power_db(double power) {
  return power == 0.0 ? kDbFloor : 10.0 * std::log10(power);
}

Signal circular_shift(const Signal& signal, long shift) {
  const std::size_t n = signal.size();
  std::vector<cplx> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[wrap_bin(static_cast<long>(t) + shift, n)] = signal[t];
  }
  return signal.with_samples(std::move(out));
}

namespace {

void write_complex_csv(std::span<const cplx> values, double fs, double fc,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::Io, "cannot write " + path.string());
  }
  char line[96];
  std::snprintf(line, sizeof line, "# n=%zu fs=%.17e fc=%.17e\n",
                values.size(), fs, fc);
  out << line;
  for (const auto& v : values) {
    std::snprintf(line, sizeof line, "%.17e,%.17e\n", v.real(), v.imag());
    out << line;
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

struct ComplexCsv {
  std::vector<cplx> values;
  double fs;
  double fc;
};

ComplexCsv read_complex_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t n = 0;
  ComplexCsv csv{{}, 0.0, 0.0};
  if (std::sscanf(header.c_str(), "# n=%zu fs=%lf fc=%lf", &n, &csv.fs,
                  &csv.fc) != 3) {
    throw Error(ErrorKind::Io, "bad header in " + path.string());
  }
  csv.values.reserve(n);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double re = 0.0;
    double im = 0.0;
    if (std::sscanf(line.c_str(), "%lf,%lf", &re, &im) != 2) {
      throw Error(ErrorKind::Io, "bad sample line in " + path.string());
    }
    csv.values.emplace_back(re, im);
  }
  if (csv.values.size() != n) {
    throw Error(ErrorKind::Io, "sample count mismatch in " + path.string());
  }
  return csv;
}

}  // namespace

void write_signal_csv(const Signal& signal, const std::filesystem::path& path) {
  write_complex_csv(signal.samples(), signal.sample_rate_hz(),
                    signal.carrier_hz(), path);
}

Signal read_signal_csv(const std::filesystem::path& path) {
  auto csv = read_complex_csv(path);
  return Signal(std::move(csv.values), csv.fs, csv.fc);
}

void write_spectrum_csv(const Spectrum& spectrum,
                        const std::filesystem::path& path) {
  write_complex_csv(spectrum.bins(), spectrum.sample_rate_hz(),
                    spectrum.carrier_hz(), path);
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
  auto csv = read_complex_csv(path);
  return Spectrum(std::move(csv.values), csv.fs, csv.fc);
}

}  // namespace ilcdpd
