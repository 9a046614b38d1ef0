#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ilcdpd/bla.hpp"
#include "ilcdpd/error.hpp"
#include "oracles.hpp"

using namespace ilcdpd;

namespace {

const std::vector<cplx> kFir{{0.9, 0.1}, {0.2, -0.15}, {-0.05, 0.04}, {0.01, 0.02}};

MultisineSpec spec_for(std::size_t n, long lo, long hi, std::uint64_t seed) {
  const auto grid = FrequencyGrid::from_bands(n, lo, hi, lo, hi);
  const std::vector<std::size_t> inband(grid.excited_bins().begin(),
                                        grid.excited_bins().end());
  return flat_multisine(grid, inband, 1.0, 1.0, seed, 640e6, 0.0);
}

FrfEstimate constant_frf(std::size_t n, std::vector<cplx> g) {
  std::vector<std::size_t> bins(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) bins[i] = i;
  FrfEstimate frf{FrequencyGrid(n, bins, bins), std::move(g),
                  std::vector<double>(bins.size()), 2, 1.0};
  return frf;
}

}  // namespace

TEST(Bla, PureGainIsExactWithZeroVariance) {
  SurrogatePa pa;
  pa.forward = GmpModel::gain(cplx(2.0, -0.5));
  SurrogatePlant plant(pa);
  for (std::size_t m : {2u, 5u}) {
    const auto frf = estimate_bla(plant, spec_for(128, -20, 20, 3), m);
    ASSERT_EQ(frf.g_bla.size(), 41u);
    EXPECT_EQ(frf.n_realizations, m);
    for (std::size_t i = 0; i < frf.g_bla.size(); ++i) {
      EXPECT_LT(std::abs(frf.g_bla[i] - cplx(2.0, -0.5)), 1e-14);
      EXPECT_LT(frf.variance[i], 1e-28);
    }
  }
}

TEST(BlaProperty, LinearFirExactAnyMAndSeed) {
  SurrogatePlant plant(linear_preset(kFir));
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    for (std::size_t m : {2u, 7u}) {
      const auto frf = estimate_bla(plant, spec_for(1921, -540, 240, seed), m);
      const auto bins = frf.grid.controlled_bins();
      for (std::size_t i = 0; i < bins.size(); ++i) {
        const cplx h = oracle::fir_response(kFir, bins[i], 1921);
        ASSERT_LT(std::abs(frf.g_bla[i] - h) / std::abs(h), 1e-10);
      }
    }
  }
}

TEST(Bla, MildSurrogateShowsDistortionVariance) {
  SurrogatePlant plant(mild_preset());
  const auto grid = FrequencyGrid::from_bands(1921, -60, 60, -540, 240);
  std::vector<std::size_t> inband(grid.excited_bins().begin(),
                                  grid.excited_bins().end());
  const auto spec = flat_multisine(FrequencyGrid::from_bands(1921, -540, 240, -540, 240),
                                   inband, 1.0, 1.0, 5, 640e6, 0.0);
  const auto frf = estimate_bla(plant, spec, 20);
  for (long b = -60; b <= 60; ++b) {
    const auto k = wrap_bin(b, 1921);
    const auto bins = frf.grid.controlled_bins();
    const auto i = std::lower_bound(bins.begin(), bins.end(), k) - bins.begin();
    EXPECT_GT(frf.variance[i], 0.0);
  }
}

TEST(BlaProperty, VarianceScalesAsOneOverM) {
  auto pa = linear_preset(kFir);
  pa.noise_std = 1e-2;
  pa.noise_seed = 8;
  std::vector<double> mean_var;
  for (std::size_t m : {4u, 16u, 64u}) {
    SurrogatePlant plant(pa);
    const auto frf = estimate_bla(plant, spec_for(512, -100, 100, 7), m);
    double v = 0.0;
    for (double x : frf.variance) v += x;
    mean_var.push_back(v / frf.variance.size());
  }
  EXPECT_NEAR(mean_var[0] / mean_var[1], 4.0, 2.0);
  EXPECT_NEAR(mean_var[1] / mean_var[2], 4.0, 2.0);
  EXPECT_GT(mean_var[0] / mean_var[1], 2.0);
  EXPECT_GT(mean_var[1] / mean_var[2], 2.0);
}

TEST(Bla, MeasuredDataOverloadMatchesClosedForm) {
  // Ratios 1 and 2: mean 1.5, sample variance 0.5, divided by M = 2.
  const FrequencyGrid grid(4, {1}, {1});
  std::vector<Signal> us;
  std::vector<Signal> ys;
  for (double g : {1.0, 2.0}) {
    std::vector<cplx> spec(4);
    spec[1] = 4.0;
    const auto u = idft(Spectrum(spec, 1.0));
    spec[1] = 4.0 * g;
    us.push_back(u);
    ys.push_back(idft(Spectrum(spec, 1.0)));
  }
  const auto frf = estimate_bla(us, ys, grid);
  EXPECT_LT(std::abs(frf.g_bla[0] - 1.5), 1e-14);
  EXPECT_NEAR(frf.variance[0], 0.25, 1e-14);
}

TEST(Bla, UnexcitedBinIsDegenerate) {
  SurrogatePlant plant(linear_preset(kFir));
  auto spec = spec_for(128, -10, 10, 1);
  spec.amplitudes[3] = 0.0;
  try {
    estimate_bla(plant, spec, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateExcitation);
    EXPECT_NE(std::string(e.what()).find("bin"), std::string::npos);
  }
  EXPECT_THROW(estimate_bla(plant, spec_for(128, -10, 10, 1), 1), Error);
}

TEST(Invert, ConstantGain) {
  const auto frf = constant_frf(8, std::vector<cplx>(4, 2.0));
  const auto l = invert_frf(frf, default_gain_floor(frf));
  EXPECT_DOUBLE_EQ(default_gain_floor(frf), 2e-6);
  for (auto v : l.l) EXPECT_EQ(v, cplx(0.5));
  EXPECT_TRUE(l.dropped_bins.empty());
}

TEST(Invert, ZeroBinIsDropped) {
  const auto frf = constant_frf(8, {2.0, 0.0, cplx(0, 1), 4.0});
  const auto l = invert_frf(frf, default_gain_floor(frf));
  EXPECT_EQ(l.dropped_bins, std::vector<std::size_t>{1});
  EXPECT_EQ(l.grid.controlled_bins().size(), 3u);
  EXPECT_FALSE(l.grid.is_controlled(1));
  EXPECT_EQ(l.l[1], cplx(0, -1));
}

TEST(Invert, AllBelowFloorIsUnusable) {
  const auto frf = constant_frf(8, {1e-9, 1e-9});
  try {
    invert_frf(frf, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnusableBla);
  }
}

TEST(InvertProperty, IdentityOnFirPlant) {
  SurrogatePlant plant(linear_preset(kFir));
  const auto frf = estimate_bla(plant, spec_for(1921, -540, 240, 4), 2);
  const auto l = invert_frf(frf, default_gain_floor(frf));
  const auto bins = l.grid.controlled_bins();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    EXPECT_LT(std::abs(l.l[i] * frf.at(bins[i]) - 1.0), 1e-12);
  }
}

TEST(FrfCsv, RoundTrip) {
  SurrogatePlant plant(mild_preset());
  const auto frf = estimate_bla(plant, spec_for(256, -30, 40, 2), 4);
  const auto path = std::filesystem::temp_directory_path() / "ilcdpd_frf.csv";
  write_frf_csv(frf, path);
  const auto back = read_frf_csv(path);
  EXPECT_EQ(back.g_bla, frf.g_bla);
  EXPECT_EQ(back.variance, frf.variance);
  EXPECT_EQ(back.n_realizations, frf.n_realizations);
  EXPECT_EQ(back.grid.controlled_bins().size(), frf.grid.controlled_bins().size());
  EXPECT_DOUBLE_EQ(back.sample_rate_hz, frf.sample_rate_hz);
  std::filesystem::remove(path);
  EXPECT_THROW(read_frf_csv(path), Error);
}
