#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "ilcdpd/error.hpp"
#include "ilcdpd/gmp.hpp"
#include "ilcdpd/rng.hpp"
#include "oracles.hpp"

using namespace ilcdpd;

namespace {

Signal sig(std::vector<cplx> x) { return Signal(std::move(x), 1.0); }

std::vector<cplx> vec(std::span<const cplx> s) { return {s.begin(), s.end()}; }

oracle::Gmp to_oracle(const GmpModel& model) {
  const auto& o = model.orders();
  oracle::Gmp g(o.memory_depth, o.degree, o.cross_depth);
  for (int m = 0; m <= o.memory_depth; ++m) {
    for (int p = 0; p <= o.degree; ++p) {
      for (int q = 0; q <= o.cross_depth; ++q) {
        g.alpha[m][p][q] = model.alpha(m, p, q);
        if (q > 0) g.beta[m][p][q] = model.beta(m, p, q);
      }
    }
  }
  return g;
}

std::vector<cplx> random_theta(std::size_t n, std::uint64_t seed,
                               double decay = 0.3) {
  auto theta = oracle::random_signal(n, seed);
  for (std::size_t i = 0; i < n; ++i) theta[i] *= std::pow(decay, i % 4);
  return theta;
}

double rel_err(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  return oracle::max_abs_diff(a, b) / oracle::max_abs(b);
}

double norm(std::span<const cplx> x) {
  double s = 0.0;
  for (auto v : x) s += std::norm(v);
  return std::sqrt(s);
}

}  // namespace

TEST(GmpOrders, TermCountMatchesEnumeration) {
  for (int nm = 0; nm <= 5; ++nm) {
    for (int np = 0; np <= 7; ++np) {
      for (int ng = 0; ng <= 5; ++ng) {
        for (bool odd : {false, true}) {
          GmpOrders o{nm, np, ng, odd};
          EXPECT_EQ(gmp_terms(o).size(), o.num_terms());
        }
      }
    }
  }
  EXPECT_EQ((GmpOrders{5, 7, 5}.num_terms()), 468u);
  EXPECT_EQ((GmpOrders{0, 0, 0}.num_terms()), 1u);
}

TEST(GmpOrders, NoDuplicateColumns) {
  const GmpOrders o{3, 5, 3};
  std::set<std::tuple<int, int, int, int>> seen;
  for (const auto& t : gmp_terms(o)) {
    EXPECT_TRUE(seen.insert({static_cast<int>(t.sum), t.m, t.p, t.g}).second);
    if (t.sum == GmpSum::Lagging) {
      EXPECT_GE(t.g, 1);
    }
  }
  // Distinct as functions of r as well: a random regressor has full rank.
  const Signal r = sig(oracle::random_signal(400, 3));
  const auto x = build_regressor(r, o);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(x);
  EXPECT_EQ(qr.rank(), x.cols());
}

TEST(GmpOrders, ParseGrid) {
  const auto g = parse_order_grid("1 3 1; 2 5 2 ;5 7 5");
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[2], (GmpOrders{5, 7, 5}));
  EXPECT_THROW(parse_order_grid("1 3"), Error);
  EXPECT_THROW(parse_order_grid("1 -3 1"), Error);
}

TEST(Regressor, OrdersZeroIsTheSignal) {
  const auto x = oracle::random_signal(16, 1);
  const auto m = build_regressor(sig(x), GmpOrders{});
  ASSERT_EQ(m.cols(), 1);
  for (std::size_t t = 0; t < 16; ++t) EXPECT_EQ(m(t, 0), x[t]);
}

TEST(Regressor, MatchesNestedLoopOracle) {
  for (const GmpOrders o :
       {GmpOrders{1, 2, 1}, GmpOrders{2, 3, 1}, GmpOrders{3, 5, 2, true}}) {
    const auto r = oracle::random_signal(32, 17);
    const auto x = build_regressor(sig(r), o);
    const auto terms = gmp_terms(o);
    for (std::size_t c = 0; c < terms.size(); ++c) {
      const auto& tm = terms[c];
      for (std::size_t t = 0; t < r.size(); ++t) {
        const cplx want = oracle::gmp_entry(r, t, tm.sum == GmpSum::Lagging,
                                            tm.m, tm.p, tm.g);
        ASSERT_LE(std::abs(x(t, c) - want), 1e-14 * std::max(1.0, std::abs(want)))
            << o.to_string() << " col " << c << " t " << t;
      }
    }
  }
}

TEST(Regressor, ConstantSignalColumns) {
  const cplx c(0.6, -0.8);
  const std::vector<cplx> r(20, c * 1.5);
  const GmpOrders o{2, 4, 2};
  const auto x = build_regressor(sig(r), o);
  const auto terms = gmp_terms(o);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const cplx want = r[0] * std::pow(std::abs(r[0]), terms[k].p);
    for (std::size_t t = 0; t < r.size(); ++t) {
      EXPECT_LE(std::abs(x(t, k) - want), 1e-14);
    }
  }
}

TEST(Regressor, RejectsShortSignal) {
  EXPECT_THROW(build_regressor(sig(oracle::random_signal(6, 1)),
                               GmpOrders{3, 1, 3}),
               Error);
}

TEST(Regressor, StackedBlocksAreIndependentlyCircular) {
  const GmpOrders o{2, 3, 1};
  const std::vector<Signal> rs{sig(oracle::random_signal(40, 1)),
                               sig(oracle::random_signal(50, 2))};
  const auto x = build_regressor(rs, o);
  ASSERT_EQ(x.rows(), 90);
  EXPECT_EQ(x.topRows(40), build_regressor(rs[0], o));
  EXPECT_EQ(x.bottomRows(50), build_regressor(rs[1], o));
}

TEST(Apply, IdentityAndZero) {
  const auto r = sig(oracle::random_signal(64, 2));
  EXPECT_EQ(apply_gmp(GmpModel::gain(1.0, GmpOrders{2, 3, 1}), r), r);
  const auto z = apply_gmp(GmpModel(GmpOrders{2, 3, 1}), r);
  for (std::size_t t = 0; t < 64; ++t) EXPECT_EQ(z[t], cplx{});
}

TEST(ApplyProperty, EqualsRegressorProduct) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GmpOrders o{static_cast<int>(seed % 4), 1 + static_cast<int>(seed % 7),
                      static_cast<int>(seed % 3)};
    const auto r = sig(oracle::random_signal(128, seed));
    const auto theta = random_theta(o.num_terms(), 100 + seed);
    const auto model = GmpModel::from_theta(o, theta);
    const Eigen::VectorXcd th = Eigen::Map<const Eigen::VectorXcd>(
        theta.data(), static_cast<Eigen::Index>(theta.size()));
    const Eigen::VectorXcd xp = build_regressor(r, o) * th;
    const auto y = apply_gmp(model, r);
    std::vector<cplx> want(xp.data(), xp.data() + xp.size());
    EXPECT_LT(rel_err(vec(y.samples()), want), 1e-12) << o.to_string();
  }
}

TEST(ApplyProperty, MatchesNestedLoopIncludingRedundantTerms) {
  GmpModel model(GmpOrders{2, 3, 2});
  Rng rng(5);
  for (int m = 0; m <= 2; ++m) {
    for (int p = 0; p <= 3; ++p) {
      for (int g = 0; g <= 2; ++g) {
        model.alpha(m, p, g) = 0.1 * rng.complex_normal();
        if (g > 0) model.beta(m, p, g) = 0.1 * rng.complex_normal();
      }
    }
  }
  const auto r = oracle::random_signal(64, 8);
  EXPECT_LT(rel_err(vec(apply_gmp(model, sig(r)).samples()),
                    oracle::gmp_eval(to_oracle(model), r)),
            1e-12);
}

TEST(Fit, GainRecovery) {
  const auto r = sig(oracle::random_signal(64, 3));
  const auto fit = fit_gmp(build_regressor(r, GmpOrders{}), r.samples(),
                           GmpOrders{});
  EXPECT_NEAR(std::abs(fit.model.alpha(0, 0, 0) - 1.0), 0.0, 1e-14);
  EXPECT_LE(fit.residual_rms, 1e-15);
}

TEST(Fit, OrthogonalTargetGivesZero) {
  const GmpOrders o{1, 3, 1};
  const auto r = sig(oracle::random_signal(200, 4));
  const auto x = build_regressor(r, o);
  const auto v = oracle::random_signal(200, 5);
  const Eigen::VectorXcd b =
      Eigen::Map<const Eigen::VectorXcd>(v.data(), 200);
  const Eigen::VectorXcd proj = x * x.colPivHouseholderQr().solve(b);
  const Eigen::VectorXcd t = b - proj;
  const auto fit = fit_gmp(x, std::span<const cplx>(t.data(), 200), o);
  EXPECT_LT(norm(fit.model.theta()), 1e-12);
}

TEST(Fit, SynthesizeThenRecover) {
  const GmpOrders o{2, 5, 2};
  const auto theta = random_theta(o.num_terms(), 7);
  const auto truth = GmpModel::from_theta(o, theta);
  std::vector<Signal> rs;
  std::vector<Signal> ts;
  for (std::uint64_t s = 0; s < 4; ++s) {
    rs.push_back(sig(oracle::random_signal(300, 20 + s, 0.8)));
    ts.push_back(apply_gmp(truth, rs.back()));
  }
  const auto fit = fit_gmp(rs, ts, o);
  EXPECT_LT(rel_err(fit.model.theta(), theta), 1e-9);
  EXPECT_LE(fit.residual_rms, 1e-10);
}

TEST(Fit, RankDeficientIsIllConditioned) {
  const std::vector<cplx> r(32, cplx(1.0, 0.0));
  try {
    fit_gmp(build_regressor(sig(r), GmpOrders{1, 1, 0}), r, GmpOrders{1, 1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IllConditioned);
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  EXPECT_NO_THROW(fit_gmp(build_regressor(sig(r), GmpOrders{1, 1, 0}), r,
                          GmpOrders{1, 1, 0}, 1e-6));
}

TEST(FitProperty, NestedOrdersNeverIncreaseResidual) {
  const auto r = sig(oracle::random_signal(500, 9));
  std::vector<cplx> target(r.samples().begin(), r.samples().end());
  for (std::size_t t = 0; t < target.size(); ++t) {
    target[t] += 0.05 * target[t] * std::norm(target[t]) +
                 0.01 * target[(t + 499) % 500] * std::abs(target[t]) * 3.0;
  }
  double prev = std::numeric_limits<double>::infinity();
  for (const GmpOrders o : {GmpOrders{0, 0, 0}, GmpOrders{1, 1, 0},
                            GmpOrders{1, 3, 1}, GmpOrders{2, 5, 2},
                            GmpOrders{3, 7, 3}}) {
    const double res = fit_gmp(build_regressor(r, o), target, o).residual_rms;
    EXPECT_LE(res, prev * (1.0 + 1e-12)) << o.to_string();
    prev = res;
  }
}

TEST(FitProperty, RidgeShrinks) {
  const GmpOrders o{2, 3, 1};
  const auto r = sig(oracle::random_signal(300, 10));
  const auto target = oracle::random_signal(300, 11);
  const auto x = build_regressor(r, o);
  double prev_res = 0.0;
  double prev_norm = std::numeric_limits<double>::infinity();
  for (double ridge : {0.0, 1e-6, 1e-3, 1e-1, 1.0, 10.0, 1e3}) {
    const auto fit = fit_gmp(x, target, o, ridge);
    const double n = norm(fit.model.theta());
    EXPECT_GE(fit.residual_rms, prev_res * (1.0 - 1e-12)) << ridge;
    EXPECT_LE(n, prev_norm * (1.0 + 1e-12)) << ridge;
    prev_res = fit.residual_rms;
    prev_norm = n;
  }
}

TEST(FitProperty, ShiftInvariance) {
  const GmpOrders o{2, 3, 1};
  const auto r = sig(oracle::random_signal(256, 12));
  auto t = oracle::random_signal(256, 13, 0.1);
  const auto truth = GmpModel::from_theta(o, random_theta(o.num_terms(), 14));
  const auto y = apply_gmp(truth, r);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += y[i];
  const auto target = sig(t);
  const auto base = fit_gmp(build_regressor(r, o), target.samples(), o);
  for (long s : {1L, 17L, -40L}) {
    const auto rs = circular_shift(r, s);
    const auto ts = circular_shift(target, s);
    const auto fit = fit_gmp(build_regressor(rs, o), ts.samples(), o);
    EXPECT_LT(rel_err(fit.model.theta(), base.model.theta()), 1e-9) << s;
  }
}

TEST(CrossValidate, TrueOrderWinsOnNoiselessData) {
  const GmpOrders truth_orders{2, 3, 1};
  const auto truth =
      GmpModel::from_theta(truth_orders, random_theta(truth_orders.num_terms(), 3));
  std::vector<Signal> rs;
  std::vector<Signal> ts;
  for (std::uint64_t s = 0; s < 5; ++s) {
    rs.push_back(sig(oracle::random_signal(256, 40 + s)));
    ts.push_back(apply_gmp(truth, rs.back()));
  }
  const std::vector<GmpOrders> grid{{1, 3, 1}, {3, 5, 2}, {2, 3, 1},
                                    {2, 5, 1}, {2, 3, 0}};
  const auto cv = cross_validate(rs, ts, grid);
  EXPECT_EQ(cv.best, truth_orders);
  ASSERT_EQ(cv.rows.size(), grid.size());
  const double true_rms = cv.rows[2].validation_rms;
  for (const auto& row : cv.rows) {
    if (row.orders == GmpOrders{3, 5, 2} || row.orders == GmpOrders{2, 5, 1}) {
      EXPECT_LE(row.validation_rms, std::max(1.1 * true_rms, 1e-12));
    }
  }
  EXPECT_GT(cv.rows[0].validation_nrmse, 1e-3);
}

TEST(CrossValidate, SingleCandidateIsReturned) {
  std::vector<Signal> rs{sig(oracle::random_signal(64, 1)),
                         sig(oracle::random_signal(64, 2))};
  std::vector<Signal> ts{sig(oracle::random_signal(64, 3)),
                         sig(oracle::random_signal(64, 4))};
  const std::vector<GmpOrders> grid{{1, 1, 1}};
  const auto cv = cross_validate(rs, ts, grid);
  EXPECT_EQ(cv.best, grid[0]);
  EXPECT_EQ(cv.rows.size(), 1u);
}

TEST(CrossValidate, TieBreaksTowardFewerTerms) {
  // Pure gain data: every order fits exactly, so the smallest one wins.
  std::vector<Signal> rs;
  std::vector<Signal> ts;
  for (std::uint64_t s = 0; s < 3; ++s) {
    rs.push_back(sig(oracle::random_signal(128, s)));
    auto v = vec(rs.back().samples());
    for (auto& x : v) x *= cplx(0.5, 0.25);
    ts.push_back(sig(v));
  }
  const std::vector<GmpOrders> grid{{2, 3, 2}, {1, 1, 1}, {0, 0, 0}, {1, 3, 0}};
  EXPECT_EQ(cross_validate(rs, ts, grid).best, (GmpOrders{0, 0, 0}));
}

TEST(CrossValidate, IllConditionedOrdersAreSkipped) {
  std::vector<Signal> rs;
  std::vector<Signal> ts;
  for (std::uint64_t s = 0; s < 3; ++s) {
    // Constant-envelope input: |r|^p columns collapse onto r.
    std::vector<cplx> v(64);
    Rng rng(s);
    for (auto& x : v) x = std::polar(1.0, rng.uniform() * 6.283);
    rs.push_back(sig(v));
    ts.push_back(sig(v));
  }
  const std::vector<GmpOrders> grid{{0, 3, 0}, {1, 0, 0}};
  const auto cv = cross_validate(rs, ts, grid);
  EXPECT_TRUE(cv.rows[0].skipped);
  EXPECT_FALSE(cv.rows[0].message.empty());
  EXPECT_EQ(cv.best, (GmpOrders{1, 0, 0}));
  const std::vector<GmpOrders> bad{{0, 3, 0}};
  EXPECT_THROW(cross_validate(rs, ts, bad), Error);
}

TEST(PostInverse, LinearPlantLearnsReciprocalGain) {
  const cplx g(0.8, 0.3);
  std::vector<Signal> us;
  std::vector<Signal> ys;
  for (std::uint64_t s = 0; s < 2; ++s) {
    us.push_back(sig(oracle::random_signal(128, s)));
    auto v = vec(us.back().samples());
    for (auto& x : v) x *= g;
    ys.push_back(sig(v));
  }
  const auto fit = estimate_postinverse(ys, us, GmpOrders{}, 0.0, 1.0);
  EXPECT_LT(std::abs(fit.model.alpha(0, 0, 0) - 1.0 / g), 1e-12);
  EXPECT_LE(fit.residual_rms, 1e-10);
  const auto unit = estimate_postinverse(ys, us, GmpOrders{}, 0.0, g);
  EXPECT_LT(std::abs(unit.model.alpha(0, 0, 0) - 1.0), 1e-12);
}

TEST(ModelFile, RoundTripIsExact) {
  const GmpOrders o{3, 5, 2};
  const auto model = GmpModel::from_theta(o, random_theta(o.num_terms(), 99));
  const auto path = std::filesystem::temp_directory_path() / "ilcdpd_model.gmp";
  write_gmp_model(model, path);
  EXPECT_EQ(read_gmp_model(path), model);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "ilcdpd_bad.gmp";
  {
    std::ofstream f(path);
    f << "ilcdpd-gmp 1\norders 1 1 1\nalpha 5 0 0 1 0\n";
  }
  EXPECT_THROW(read_gmp_model(path), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(read_gmp_model(path), Error);
}
