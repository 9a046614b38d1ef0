#pragma once

// Generalized memory polynomial (GMP) models.
//
//   u(t) = sum_{m=0..Nm} sum_{p=0..Np} sum_{g=0..Ng} a[m,p,g] r(t-m) |r(t-m-g)|^p
//        + sum_{m=0..Nm} sum_{p=0..Np} sum_{g=1..Ng} b[m,p,g] r(t-m-g) |r(t-m)|^p
//
// Time indices are circular within each signal. The "aligned" sum (a) holds
// the envelope lagging the carrier sample; the "lagging" sum (b) swaps the
// roles. The b sum starts at g = 1 because g = 0 would duplicate a[m,p,0].
//
// With p = 0 the envelope factor is 1, so a[m,0,g] for g >= 1 repeats the
// column of a[m,0,0] and b[m,0,g] is a plain delay. The regressor therefore
// carries the linear part only as a[m,0,0]; the other p = 0 coefficients can
// be stored and are evaluated, but are never estimated.
//
// Regressor column order (stable, used by theta vectors):
//   aligned terms: for m in 0..Nm, for p in 0..Np, for g in 0..Ng (g = 0 only
//                  when p = 0)
//   lagging terms: for m in 0..Nm, for p in 1..Np, for g in 1..Ng
// With odd_only set, terms with odd p (even-order products) are omitted.

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ilcdpd/signal.hpp"

namespace ilcdpd {

struct GmpOrders {
  int memory_depth = 0;  // n_m
  int degree = 0;        // n_p
  int cross_depth = 0;   // n_g
  bool odd_only = false;

  /// Number of regressor columns: (n_m+1)(1 + d(2 n_g + 1)) where d counts
  /// the kept degrees p >= 1.
  std::size_t num_terms() const;
  /// Largest circular lag used, n_m + n_g.
  int max_lag() const { return memory_depth + cross_depth; }
  void validate() const;
  std::string to_string() const;

  friend bool operator==(const GmpOrders&, const GmpOrders&) = default;
};

enum class GmpSum { Aligned, Lagging };

struct GmpTerm {
  GmpSum sum;
  int m;
  int p;
  int g;
  friend bool operator==(const GmpTerm&, const GmpTerm&) = default;
};

/// Terms in regressor column order.
std::vector<GmpTerm> gmp_terms(const GmpOrders& orders);

class GmpModel {
 public:
  /// All-zero model.
  explicit GmpModel(GmpOrders orders);

  /// theta in gmp_terms(orders) order.
  static GmpModel from_theta(GmpOrders orders, std::span<const cplx> theta);
  /// a[0,0,0] = gain, everything else zero.
  static GmpModel gain(cplx g, GmpOrders orders = {});

  const GmpOrders& orders() const { return orders_; }

  /// Full (n_m+1)(n_p+1)(n_g+1) aligned and (n_m+1)(n_p+1)n_g lagging arrays.
  std::span<const cplx> alpha() const { return alpha_; }
  std::span<const cplx> beta() const { return beta_; }

  cplx& alpha(int m, int p, int g);
  cplx alpha(int m, int p, int g) const;
  cplx& beta(int m, int p, int g);
  cplx beta(int m, int p, int g) const;
  cplx& coefficient(const GmpTerm& term);
  cplx coefficient(const GmpTerm& term) const;

  std::vector<cplx> theta() const;

  friend bool operator==(const GmpModel&, const GmpModel&) = default;

 private:
  std::size_t alpha_index(int m, int p, int g) const;
  std::size_t beta_index(int m, int p, int g) const;

  GmpOrders orders_;
  std::vector<cplx> alpha_;
  std::vector<cplx> beta_;
};

/// N x num_terms matrix. Throws InvalidInput when N <= n_m + n_g.
Eigen::MatrixXcd build_regressor(const Signal& r, const GmpOrders& orders);
/// Row-stacked regressors, each block circular within its own signal.
Eigen::MatrixXcd build_regressor(std::span<const Signal> rs,
                                 const GmpOrders& orders);

struct GmpFit {
  GmpModel model;
  double residual_rms;
};

/// Minimizes sum|X theta - target|^2 + ridge |theta|^2 with a Householder QR
/// of the column-equilibrated (and, for ridge > 0, augmented) regressor.
/// Throws IllConditioned when ridge == 0 and the regressor is numerically
/// rank deficient.
GmpFit fit_gmp(const Eigen::MatrixXcd& regressor,
               std::span<const cplx> target, const GmpOrders& orders,
               double ridge = 0.0);

/// Fits one model on several (input, target) realizations.
GmpFit fit_gmp(std::span<const Signal> inputs, std::span<const Signal> targets,
               const GmpOrders& orders, double ridge = 0.0);

Signal apply_gmp(const GmpModel& model, const Signal& r);
/// Raw evaluation; the result may contain non-finite values on overflow.
std::vector<cplx> evaluate_gmp(const GmpModel& model, std::span<const cplx> x);

struct CrossValidationRow {
  GmpOrders orders;
  std::size_t num_terms = 0;
  double validation_rms = 0.0;  // absolute rms on the held-out pair
  double validation_nrmse = 0.0;  // relative to the held-out target rms
  double residual_rms = 0.0;    // in-sample
  bool skipped = false;
  std::string message;
};

struct CrossValidationOptions {
  double ridge = 0.0;
  /// Candidates within this relative margin of the best validation rms tie.
  double tie_relative = 0.01;
  /// Validation nrmse values below this count as equal (numerical noise).
  double tie_floor_nrmse = 1e-9;
  /// Warnings about skipped orders; nullptr silences them.
  std::ostream* log = nullptr;
};

struct CrossValidationResult {
  GmpOrders best;
  GmpModel model;  // fitted on the estimation pairs at `best`
  std::vector<CrossValidationRow> rows;
};

/// Estimates on all pairs but the last and validates on the last. Ties are
/// broken toward fewer coefficients. Orders whose fit is ill-conditioned are
/// skipped (recorded in their row); it is an error if every order is skipped.
CrossValidationResult cross_validate(std::span<const Signal> inputs,
                                     std::span<const Signal> targets,
                                     std::span<const GmpOrders> order_grid,
                                     const CrossValidationOptions& options = {});

/// Post-inverse (indirect learning) fit from y / desired_gain to u.
GmpFit estimate_postinverse(std::span<const Signal> outputs,
                            std::span<const Signal> inputs,
                            const GmpOrders& orders, double ridge = 0.0,
                            cplx desired_gain = 1.0);

// Model files, one entry per line:
//   ilcdpd-gmp 1
//   orders <n_m> <n_p> <n_g> [odd]
//   alpha <m> <p> <g> <re> <im>
//   beta <m> <p> <g> <re> <im>
void write_gmp_model(const GmpModel& model, const std::filesystem::path& path);
GmpModel read_gmp_model(const std::filesystem::path& path);

/// The orders/alpha/beta lines of a model file, shared with plant presets.
std::string format_gmp_body(const GmpModel& model);
/// Parses orders/alpha/beta lines; `orders` must come first.
GmpModel parse_gmp_body(std::span<const std::string> lines);

/// Parses "n_m n_p n_g" triples separated by ';', e.g. "2 3 1; 3 5 2".
std::vector<GmpOrders> parse_order_grid(const std::string& text,
                                        bool odd_only = false);

}  // namespace ilcdpd
