#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "ilcdpd/error.hpp"
#include "ilcdpd/rng.hpp"
#include "ilcdpd/signal.hpp"
#include "oracles.hpp"

using namespace ilcdpd;

namespace {

Signal sig(std::vector<cplx> x) { return Signal(std::move(x), 1.0); }

std::vector<cplx> vec(std::span<const cplx> s) { return {s.begin(), s.end()}; }

double rel_err(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  return oracle::max_abs_diff(a, b) / std::max(oracle::max_abs(b), 1e-300);
}

}  // namespace

TEST(Dft, DcOnly) {
  const auto X = dft(sig({1, 1, 1, 1}));
  EXPECT_EQ(X[0], cplx(4, 0));
  for (std::size_t k = 1; k < 4; ++k) EXPECT_LT(std::abs(X[k]), 1e-15);
}

TEST(Dft, Impulse) {
  const auto X = dft(sig({1, 0, 0, 0}));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_LT(std::abs(X[k] - 1.0), 1e-15);
}

TEST(Dft, MatchesDirectSum) {
  for (std::size_t n : {64u, 63u, 1921u / 17u}) {
    const auto x = oracle::random_signal(n, 11 + n);
    EXPECT_LT(rel_err(vec(dft(sig(x)).bins()), oracle::dft(x)), 1e-12) << n;
  }
}

TEST(Idft, InverseOfDcSpectrum) {
  const auto x = idft(Spectrum({4, 0, 0, 0}, 1.0));
  for (std::size_t t = 0; t < 4; ++t) EXPECT_LT(std::abs(x[t] - 1.0), 1e-15);
}

TEST(Idft, ZeroSpectrum) {
  const auto x = idft(Spectrum(std::vector<cplx>(8), 1.0));
  for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(x[t], cplx{});
}

TEST(Idft, MatchesDirectSum) {
  const auto X = oracle::random_signal(64, 5, 10.0);
  EXPECT_LT(rel_err(vec(idft(Spectrum(X, 1.0)).samples()), oracle::idft(X)),
            1e-12);
}

TEST(Dft, RejectsNonFinite) {
  EXPECT_THROW(sig({1, cplx(NAN, 0), 0, 0}), Error);
  EXPECT_THROW(Spectrum({1, cplx(0, INFINITY)}, 1.0), Error);
}

TEST(DftProperty, RoundTripAndParseval) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 2 + seed * 37;
    const auto x = oracle::random_signal(n, seed);
    const Signal s = sig(x);
    const Spectrum X = dft(s);
    EXPECT_LT(rel_err(vec(idft(X).samples()), x), 1e-12);
    EXPECT_LT(rel_err(vec(dft(idft(X)).bins()), vec(X.bins())), 1e-12);
    double et = 0.0;
    double ef = 0.0;
    for (auto v : x) et += std::norm(v);
    for (auto v : X.bins()) ef += std::norm(v);
    EXPECT_NEAR(et, ef / static_cast<double>(n), 1e-12 * et);
  }
}

TEST(DftProperty, Linearity) {
  const auto x = oracle::random_signal(100, 1);
  const auto y = oracle::random_signal(100, 2);
  const cplx a(0.3, -1.2);
  const cplx b(-2.0, 0.5);
  std::vector<cplx> z(100);
  for (std::size_t t = 0; t < 100; ++t) z[t] = a * x[t] + b * y[t];
  const auto X = dft(sig(x));
  const auto Y = dft(sig(y));
  std::vector<cplx> expect(100);
  for (std::size_t k = 0; k < 100; ++k) expect[k] = a * X[k] + b * Y[k];
  EXPECT_LT(rel_err(vec(dft(sig(z)).bins()), expect), 1e-12);
}

TEST(DftProperty, ShiftIsPhaseRamp) {
  const std::size_t n = 97;
  const auto x = oracle::random_signal(n, 3);
  for (long shift : {1L, 5L, -7L, 200L}) {
    const auto X = dft(sig(x));
    const auto Xs = dft(circular_shift(sig(x), shift));
    std::vector<cplx> expect(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(shift) / static_cast<double>(n);
      expect[k] = X[k] * std::polar(1.0, ang);
    }
    EXPECT_LT(rel_err(vec(Xs.bins()), expect), 1e-11) << shift;
  }
}

TEST(Papr, ConstantEnvelopeIsZero) {
  std::vector<cplx> x(50);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::polar(1.0, 0.37 * t);
  EXPECT_NEAR(papr_db(sig(x)), 0.0, 1e-12);
}

TEST(Papr, ImpulseLike) {
  EXPECT_NEAR(papr_db(sig({2, 0, 0, 0})), 10.0 * std::log10(4.0), 1e-12);
  EXPECT_NEAR(papr_db(sig({2, 0, 0, 0})), 6.0206, 1e-4);
}

TEST(Papr, SingleToneAnyAmplitude) {
  for (double a : {1e-3, 1.0, 250.0}) {
    std::vector<cplx> x(64);
    for (std::size_t t = 0; t < 64; ++t) {
      x[t] = std::polar(a, 2.0 * std::numbers::pi * 5.0 * t / 64.0);
    }
    EXPECT_NEAR(papr_db(sig(x)), 0.0, 1e-12);
  }
}

TEST(Papr, AllZeroIsUndefined) {
  try {
    papr_db(sig({0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedStatistic);
  }
}

TEST(PaprProperty, NonNegative) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    EXPECT_GE(papr_db(sig(oracle::random_signal(32, s))), 0.0);
  }
}

TEST(RmsPower, Cases) {
  std::vector<cplx> tone(16);
  for (std::size_t t = 0; t < 16; ++t) tone[t] = std::polar(1.0, 0.4 * t);
  EXPECT_NEAR(rms_power_db(sig(tone)), 0.0, 1e-12);
  EXPECT_EQ(rms_power_db(sig({0, 0})), kDbFloor);
  EXPECT_NEAR(rms_power_db(sig({0.1, 0.1, -0.1})), -20.0, 1e-12);
  EXPECT_NEAR(rms_power_dbm(sig(tone)), 10.0, 1e-9);
}

TEST(Grid, FromBandsWrapsNegativeBins) {
  const auto g = FrequencyGrid::from_bands(16, -2, 2, -4, 3);
  EXPECT_EQ(g.excited_bins().size(), 5u);
  EXPECT_EQ(g.controlled_bins().size(), 8u);
  EXPECT_TRUE(g.is_excited(14));
  EXPECT_TRUE(g.is_controlled(12));
  EXPECT_FALSE(g.is_controlled(11));
  EXPECT_FALSE(g.is_controlled(4));
}

TEST(Grid, RejectsBadSets) {
  EXPECT_THROW(FrequencyGrid(8, {1, 2}, {1}), Error);
  EXPECT_THROW(FrequencyGrid(8, {1}, {1, 1}), Error);
  EXPECT_THROW(FrequencyGrid(8, {}, {8}), Error);
}

TEST(Grid, WithoutDropsFromBothSets) {
  const auto g = FrequencyGrid(10, {1, 2}, {0, 1, 2, 3}).without(
      std::vector<std::size_t>{2, 3});
  EXPECT_EQ(g.excited_bins().size(), 1u);
  EXPECT_EQ(g.controlled_bins().size(), 2u);
}

TEST(Bins, SignedAndFrequency) {
  EXPECT_EQ(wrap_bin(-1, 10), 9u);
  EXPECT_EQ(signed_bin(9, 10), -1);
  EXPECT_EQ(signed_bin(5, 10), 5);
  EXPECT_EQ(signed_bin(5, 11), 5);
  EXPECT_EQ(signed_bin(6, 11), -5);
  EXPECT_DOUBLE_EQ(bin_frequency_hz(1921 - 540, 1921, 640e6),
                   -540.0 * 640e6 / 1921.0);
}

TEST(Csv, SignalRoundTripIsExact) {
  const auto path = std::filesystem::temp_directory_path() / "ilcdpd_sig.csv";
  const Signal s(oracle::random_signal(33, 8), 640e6, 850e6);
  write_signal_csv(s, path);
  EXPECT_EQ(read_signal_csv(path), s);
  const Spectrum X = dft(s);
  write_spectrum_csv(X, path);
  EXPECT_EQ(read_spectrum_csv(path), X);
  std::filesystem::remove(path);
}

TEST(Rng, Deterministic) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Rng, ComplexNormalUnitPower) {
  Rng r(7);
  double acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) acc += std::norm(r.complex_normal());
  EXPECT_NEAR(acc / n, 1.0, 0.02);
}

TEST(Rng, UniformRange) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int i = 0; i < 1000; ++i) ASSERT_LT(r.index(7), 7u);
}
