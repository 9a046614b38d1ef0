#pragma once

// Slow reference implementations used to check the library. Nothing here
// calls into ilcdpd except for the plain data types.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

inline std::size_t wrap(long t, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((t % m) + m) % m);
}

/// Direct O(N^2) forward DFT.
inline std::vector<cplx> dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi *
                         static_cast<double>((k * t) % n) /
                         static_cast<double>(n);
      acc += x[t] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

/// Direct O(N^2) inverse DFT with the 1/N factor.
inline std::vector<cplx> idft(const std::vector<cplx>& X) {
  const std::size_t n = X.size();
  std::vector<cplx> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    cplx acc{};
    for (std::size_t k = 0; k < n; ++k) {
      const double ang = 2.0 * std::numbers::pi *
                         static_cast<double>((k * t) % n) /
                         static_cast<double>(n);
      acc += X[k] * cplx(std::cos(ang), std::sin(ang));
    }
    out[t] = acc / static_cast<double>(n);
  }
  return out;
}

/// y[t] = sum_i h[i] x[t - i], circular.
inline std::vector<cplx> circular_convolution(const std::vector<cplx>& h,
                                              const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> y(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < h.size(); ++i) {
      y[t] += h[i] * x[wrap(static_cast<long>(t) - static_cast<long>(i), n)];
    }
  }
  return y;
}

/// H(k) = sum_i h[i] exp(-i 2 pi k i / N).
inline cplx fir_response(const std::vector<cplx>& h, std::size_t k,
                         std::size_t n) {
  cplx acc{};
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i) /
                       static_cast<double>(n);
    acc += h[i] * std::polar(1.0, ang);
  }
  return acc;
}

/// alpha[m][p][g] with g in 0..ng, beta[m][p][g] with g in 1..ng (index 0
/// unused).
struct Gmp {
  int nm, np, ng;
  std::vector<std::vector<std::vector<cplx>>> alpha, beta;

  Gmp(int nm_, int np_, int ng_)
      : nm(nm_), np(np_), ng(ng_),
        alpha(nm_ + 1, std::vector<std::vector<cplx>>(
                           np_ + 1, std::vector<cplx>(ng_ + 1))),
        beta(nm_ + 1, std::vector<std::vector<cplx>>(
                          np_ + 1, std::vector<cplx>(ng_ + 1))) {}
};

/// Sample-by-sample nested-loop evaluation of the GMP double sum.
inline std::vector<cplx> gmp_eval(const Gmp& model, const std::vector<cplx>& r) {
  const std::size_t n = r.size();
  std::vector<cplx> u(n);
  for (std::size_t t = 0; t < n; ++t) {
    const long tt = static_cast<long>(t);
    cplx acc{};
    for (int m = 0; m <= model.nm; ++m) {
      for (int p = 0; p <= model.np; ++p) {
        for (int g = 0; g <= model.ng; ++g) {
          const cplx a = model.alpha[m][p][g];
          if (a != cplx{}) {
            acc += a * r[wrap(tt - m, n)] *
                   std::pow(std::abs(r[wrap(tt - m - g, n)]), p);
          }
          if (g >= 1) {
            const cplx b = model.beta[m][p][g];
            if (b != cplx{}) {
              acc += b * r[wrap(tt - m - g, n)] *
                     std::pow(std::abs(r[wrap(tt - m, n)]), p);
            }
          }
        }
      }
    }
    u[t] = acc;
  }
  return u;
}

/// Value of one regressor entry.
inline cplx gmp_entry(const std::vector<cplx>& r, std::size_t t, bool lagging,
                      int m, int p, int g) {
  const std::size_t n = r.size();
  const long tt = static_cast<long>(t);
  if (!lagging) {
    return r[wrap(tt - m, n)] * std::pow(std::abs(r[wrap(tt - m - g, n)]), p);
  }
  return r[wrap(tt - m - g, n)] * std::pow(std::abs(r[wrap(tt - m, n)]), p);
}

inline std::vector<cplx> random_signal(std::size_t n, std::uint64_t seed,
                                       double scale = 1.0) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> d(0.0, scale / std::sqrt(2.0));
  std::vector<cplx> x(n);
  for (auto& v : x) v = {d(eng), d(eng)};
  return x;
}

inline double max_abs_diff(const std::vector<cplx>& a,
                           const std::vector<cplx>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const std::vector<cplx>& a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace oracle
