#include "ilcdpd/gmp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <limits>
#include <sstream>

#include "ilcdpd/error.hpp"

namespace ilcdpd {

namespace {

bool keeps_degree(const GmpOrders& orders, int p) {
  return !orders.odd_only || p % 2 == 0;
}

/// env[p][t] = |r[t]|^p by repeated multiplication (0^0 = 1).
std::vector<std::vector<double>> envelope_powers(std::span<const cplx> r,
                                                 int degree) {
  std::vector<std::vector<double>> env(
      static_cast<std::size_t>(degree) + 1,
      std::vector<double>(r.size(), 1.0));
  for (int p = 1; p <= degree; ++p) {
    for (std::size_t t = 0; t < r.size(); ++t) {
      env[p][t] = env[p - 1][t] * std::abs(r[t]);
    }
  }
  return env;
}

inline std::size_t lag(std::size_t t, int d, std::size_t n) {
  return (t + n - static_cast<std::size_t>(d) % n) % n;
}

void check_length(std::size_t n, const GmpOrders& orders) {
  if (n <= static_cast<std::size_t>(orders.max_lag())) {
    throw Error(ErrorKind::InvalidInput,
                "signal of " + std::to_string(n) +
                    " samples is too short for GMP orders " +
                    orders.to_string());
  }
}

double rms(std::span<const cplx> x) {
  return x.empty() ? 0.0 : std::sqrt(mean_power(x));
}

}  // namespace

std::size_t GmpOrders::num_terms() const {
  std::size_t degrees = 0;
  for (int p = 1; p <= degree; ++p) degrees += keeps_degree(*this, p) ? 1 : 0;
  const auto m = static_cast<std::size_t>(memory_depth + 1);
  const auto g = static_cast<std::size_t>(cross_depth);
  return m * (1 + degrees * (2 * g + 1));
}

void GmpOrders::validate() const {
  if (memory_depth < 0 || degree < 0 || cross_depth < 0) {
    throw Error(ErrorKind::InvalidInput,
                "GMP orders must be nonnegative, got " + to_string());
  }
}

std::string GmpOrders::to_string() const {
  std::string s = "(" + std::to_string(memory_depth) + "," +
                  std::to_string(degree) + "," + std::to_string(cross_depth) +
                  ")";
  return odd_only ? s + "odd" : s;
}

std::vector<GmpTerm> gmp_terms(const GmpOrders& orders) {
  orders.validate();
  std::vector<GmpTerm> terms;
  terms.reserve(orders.num_terms());
  for (int m = 0; m <= orders.memory_depth; ++m) {
    for (int p = 0; p <= orders.degree; ++p) {
      if (!keeps_degree(orders, p)) continue;
      for (int g = 0; g <= (p == 0 ? 0 : orders.cross_depth); ++g) {
        terms.push_back({GmpSum::Aligned, m, p, g});
      }
    }
  }
  for (int m = 0; m <= orders.memory_depth; ++m) {
    for (int p = 1; p <= orders.degree; ++p) {
      if (!keeps_degree(orders, p)) continue;
      for (int g = 1; g <= orders.cross_depth; ++g) {
        terms.push_back({GmpSum::Lagging, m, p, g});
      }
    }
  }
  return terms;
}

GmpModel::GmpModel(GmpOrders orders) : orders_(orders) {
  orders_.validate();
  const auto m = static_cast<std::size_t>(orders_.memory_depth + 1);
  const auto p = static_cast<std::size_t>(orders_.degree + 1);
  const auto g = static_cast<std::size_t>(orders_.cross_depth);
  alpha_.assign(m * p * (g + 1), cplx{});
  beta_.assign(m * p * g, cplx{});
}

GmpModel GmpModel::from_theta(GmpOrders orders, std::span<const cplx> theta) {
  GmpModel model(orders);
  const auto terms = gmp_terms(orders);
  if (theta.size() != terms.size()) {
    throw Error(ErrorKind::InvalidInput,
                "theta has " + std::to_string(theta.size()) +
                    " entries, orders " + orders.to_string() + " need " +
                    std::to_string(terms.size()));
  }
  for (std::size_t i = 0; i < terms.size(); ++i) {
    model.coefficient(terms[i]) = theta[i];
  }
  return model;
}

GmpModel GmpModel::gain(cplx g, GmpOrders orders) {
  GmpModel model(orders);
  model.alpha(0, 0, 0) = g;
  return model;
}

std::size_t GmpModel::alpha_index(int m, int p, int g) const {
  if (m < 0 || m > orders_.memory_depth || p < 0 || p > orders_.degree ||
      g < 0 || g > orders_.cross_depth) {
    throw Error(ErrorKind::InvalidInput, "alpha index out of range");
  }
  const auto np = static_cast<std::size_t>(orders_.degree + 1);
  const auto ng = static_cast<std::size_t>(orders_.cross_depth + 1);
  return (static_cast<std::size_t>(m) * np + static_cast<std::size_t>(p)) *
             ng +
         static_cast<std::size_t>(g);
}

std::size_t GmpModel::beta_index(int m, int p, int g) const {
  if (m < 0 || m > orders_.memory_depth || p < 0 || p > orders_.degree ||
      g < 1 || g > orders_.cross_depth) {
    throw Error(ErrorKind::InvalidInput, "beta index out of range");
  }
  const auto np = static_cast<std::size_t>(orders_.degree + 1);
  const auto ng = static_cast<std::size_t>(orders_.cross_depth);
  return (static_cast<std::size_t>(m) * np + static_cast<std::size_t>(p)) *
             ng +
         static_cast<std::size_t>(g - 1);
}

cplx& GmpModel::alpha(int m, int p, int g) { return alpha_[alpha_index(m, p, g)]; }
cplx GmpModel::alpha(int m, int p, int g) const {
  return alpha_[alpha_index(m, p, g)];
}
cplx& GmpModel::beta(int m, int p, int g) { return beta_[beta_index(m, p, g)]; }
cplx GmpModel::beta(int m, int p, int g) const {
  return beta_[beta_index(m, p, g)];
}

cplx& GmpModel::coefficient(const GmpTerm& t) {
  return t.sum == GmpSum::Aligned ? alpha(t.m, t.p, t.g) : beta(t.m, t.p, t.g);
}

cplx GmpModel::coefficient(const GmpTerm& t) const {
  return t.sum == GmpSum::Aligned ? alpha(t.m, t.p, t.g) : beta(t.m, t.p, t.g);
}

std::vector<cplx> GmpModel::theta() const {
  std::vector<cplx> theta;
  for (const auto& t : gmp_terms(orders_)) theta.push_back(coefficient(t));
  return theta;
}

namespace {

void fill_regressor(std::span<const cplx> r, const std::vector<GmpTerm>& terms,
                    int degree, Eigen::Ref<Eigen::MatrixXcd> block) {
  const std::size_t n = r.size();
  const auto env = envelope_powers(r, degree);
  for (std::size_t c = 0; c < terms.size(); ++c) {
    const auto& term = terms[c];
    const auto& e = env[term.p];
    const auto col = static_cast<Eigen::Index>(c);
    if (term.sum == GmpSum::Aligned) {
      for (std::size_t t = 0; t < n; ++t) {
        block(static_cast<Eigen::Index>(t), col) =
            r[lag(t, term.m, n)] * e[lag(t, term.m + term.g, n)];
      }
    } else {
      for (std::size_t t = 0; t < n; ++t) {
        block(static_cast<Eigen::Index>(t), col) =
            r[lag(t, term.m + term.g, n)] * e[lag(t, term.m, n)];
      }
    }
  }
}

}  // namespace

Eigen::MatrixXcd build_regressor(const Signal& r, const GmpOrders& orders) {
  return build_regressor(std::span<const Signal>(&r, 1), orders);
}

Eigen::MatrixXcd build_regressor(std::span<const Signal> rs,
                                 const GmpOrders& orders) {
  const auto terms = gmp_terms(orders);
  Eigen::Index rows = 0;
  for (const auto& r : rs) {
    check_length(r.size(), orders);
    rows += static_cast<Eigen::Index>(r.size());
  }
  Eigen::MatrixXcd x(rows, static_cast<Eigen::Index>(terms.size()));
  Eigen::Index row = 0;
  for (const auto& r : rs) {
    const auto n = static_cast<Eigen::Index>(r.size());
    fill_regressor(r.samples(), terms, orders.degree, x.middleRows(row, n));
    row += n;
  }
  return x;
}

GmpFit fit_gmp(const Eigen::MatrixXcd& regressor, std::span<const cplx> target,
               const GmpOrders& orders, double ridge) {
  const Eigen::Index rows = regressor.rows();
  const Eigen::Index cols = regressor.cols();
  if (static_cast<std::size_t>(rows) != target.size()) {
    throw Error(ErrorKind::InvalidInput,
                "regressor has " + std::to_string(rows) + " rows but target " +
                    std::to_string(target.size()) + " samples");
  }
  if (static_cast<std::size_t>(cols) != orders.num_terms()) {
    throw Error(ErrorKind::InvalidInput,
                "regressor column count does not match orders");
  }
  if (ridge < 0.0 || !std::isfinite(ridge)) {
    throw Error(ErrorKind::InvalidInput, "ridge must be nonnegative");
  }
  const Eigen::Index aug = ridge > 0.0 ? cols : 0;

  // Ridge enters as extra rows sqrt(ridge) I; the column equilibration below
  // is a change of variables and leaves the minimizer unchanged.
  Eigen::MatrixXcd a(rows + aug, cols);
  a.topRows(rows) = regressor;
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(rows + aug);
  for (Eigen::Index i = 0; i < rows; ++i) b(i) = target[static_cast<std::size_t>(i)];
  if (aug > 0) {
    a.bottomRows(aug) =
        std::sqrt(ridge) * Eigen::MatrixXcd::Identity(cols, cols);
  }

  Eigen::VectorXd scale(cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double norm = a.col(c).norm();
    if (norm == 0.0) {
      throw Error(ErrorKind::IllConditioned,
                  "regressor column " + std::to_string(c) +
                      " is identically zero for orders " + orders.to_string() +
                      "; use a ridge term or lower orders");
    }
    scale(c) = 1.0 / norm;
    a.col(c) *= scale(c);
  }

  Eigen::HouseholderQR<Eigen::Ref<Eigen::MatrixXcd>> qr(a);
  if (ridge == 0.0) {
    const auto diag = qr.matrixQR().diagonal().cwiseAbs();
    const double rcond = diag.minCoeff() / diag.maxCoeff();
    if (!(rcond > 1e-12)) {
      char msg[200];
      std::snprintf(msg, sizeof msg,
                    "regressor for orders %s is numerically rank deficient "
                    "(rcond %.2e); use a ridge term or lower orders",
                    orders.to_string().c_str(), rcond);
      throw Error(ErrorKind::IllConditioned, msg);
    }
  }
  Eigen::VectorXcd phi = qr.solve(b);
  Eigen::VectorXcd theta = phi.cwiseProduct(scale.cast<cplx>());

  const Eigen::VectorXcd residual = regressor * theta - b.head(rows);
  const double residual_rms =
      rows > 0 ? std::sqrt(residual.squaredNorm() / static_cast<double>(rows))
               : 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(theta(i).real()) || !std::isfinite(theta(i).imag())) {
      throw Error(ErrorKind::IllConditioned,
                  "non-finite GMP coefficients for orders " +
                      orders.to_string());
    }
  }
  return GmpFit{GmpModel::from_theta(
                    orders, std::span<const cplx>(theta.data(),
                                                  static_cast<std::size_t>(
                                                      theta.size()))),
                residual_rms};
}

namespace {

std::vector<cplx> concat(std::span<const Signal> signals) {
  std::vector<cplx> out;
  for (const auto& s : signals) {
    out.insert(out.end(), s.samples().begin(), s.samples().end());
  }
  return out;
}

void check_pairs(std::span<const Signal> inputs,
                 std::span<const Signal> targets) {
  if (inputs.size() != targets.size() || inputs.empty()) {
    throw Error(ErrorKind::InvalidInput,
                "need equally many nonzero input and target signals");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != targets[i].size()) {
      throw Error(ErrorKind::InvalidInput,
                  "input/target length mismatch in pair " + std::to_string(i));
    }
  }
}

}  // namespace

GmpFit fit_gmp(std::span<const Signal> inputs, std::span<const Signal> targets,
               const GmpOrders& orders, double ridge) {
  check_pairs(inputs, targets);
  const auto x = build_regressor(inputs, orders);
  return fit_gmp(x, concat(targets), orders, ridge);
}

std::vector<cplx> evaluate_gmp(const GmpModel& model, std::span<const cplx> x) {
  const auto& orders = model.orders();
  check_length(x.size(), orders);
  const std::size_t n = x.size();
  const auto env = envelope_powers(x, orders.degree);
  std::vector<cplx> y(n);
  // Every stored coefficient, including the redundant p = 0 cross terms that
  // the regressor leaves out.
  auto add = [&](const GmpTerm& term) {
    const cplx c = model.coefficient(term);
    if (c == cplx{}) return;
    const auto& e = env[term.p];
    const int xd = term.sum == GmpSum::Aligned ? term.m : term.m + term.g;
    const int ed = term.sum == GmpSum::Aligned ? term.m + term.g : term.m;
    for (std::size_t t = 0; t < n; ++t) {
      y[t] += c * (x[lag(t, xd, n)] * e[lag(t, ed, n)]);
    }
  };
  for (int m = 0; m <= orders.memory_depth; ++m) {
    for (int p = 0; p <= orders.degree; ++p) {
      for (int g = 0; g <= orders.cross_depth; ++g) {
        add({GmpSum::Aligned, m, p, g});
        if (g > 0) add({GmpSum::Lagging, m, p, g});
      }
    }
  }
  return y;
}

Signal apply_gmp(const GmpModel& model, const Signal& r) {
  return r.with_samples(evaluate_gmp(model, r.samples()));
}

CrossValidationResult cross_validate(std::span<const Signal> inputs,
                                     std::span<const Signal> targets,
                                     std::span<const GmpOrders> order_grid,
                                     const CrossValidationOptions& options) {
  check_pairs(inputs, targets);
  if (inputs.size() < 2) {
    throw Error(ErrorKind::InvalidInput,
                "cross-validation needs at least 2 realizations");
  }
  if (order_grid.empty()) {
    throw Error(ErrorKind::InvalidInput, "order grid is empty");
  }
  const std::size_t est = inputs.size() - 1;
  const auto est_in = inputs.first(est);
  const auto est_tg = targets.first(est);
  const Signal& val_in = inputs[est];
  const Signal& val_tg = targets[est];
  const double val_scale = rms(val_tg.samples());

  std::vector<CrossValidationRow> rows;
  std::vector<std::optional<GmpModel>> models;
  for (const auto& orders : order_grid) {
    CrossValidationRow row;
    row.orders = orders;
    row.num_terms = orders.num_terms();
    try {
      auto fit = fit_gmp(est_in, est_tg, orders, options.ridge);
      const Signal pred = apply_gmp(fit.model, val_in);
      std::vector<cplx> err(val_tg.size());
      for (std::size_t t = 0; t < err.size(); ++t) {
        err[t] = pred[t] - val_tg[t];
      }
      row.residual_rms = fit.residual_rms;
      row.validation_rms = rms(err);
      row.validation_nrmse =
          val_scale > 0.0 ? row.validation_rms / val_scale : row.validation_rms;
      models.emplace_back(std::move(fit.model));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::IllConditioned) throw;
      row.skipped = true;
      row.message = e.what();
      if (options.log) {
        *options.log << "warning: skipping orders " << orders.to_string()
                     << ": " << e.what() << "\n";
      }
      models.emplace_back(std::nullopt);
    }
    rows.push_back(std::move(row));
  }

  double best_rms = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    if (!row.skipped) best_rms = std::min(best_rms, row.validation_nrmse);
  }
  if (!std::isfinite(best_rms)) {
    throw Error(ErrorKind::IllConditioned,
                "every candidate order was ill-conditioned");
  }
  const double tie_limit =
      std::max(best_rms * (1.0 + options.tie_relative), options.tie_floor_nrmse);
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].skipped || rows[i].validation_nrmse > tie_limit) continue;
    if (!pick || rows[i].num_terms < rows[*pick].num_terms ||
        (rows[i].num_terms == rows[*pick].num_terms &&
         rows[i].validation_nrmse < rows[*pick].validation_nrmse)) {
      pick = i;
    }
  }
  return CrossValidationResult{rows[*pick].orders, std::move(*models[*pick]),
                               std::move(rows)};
}

GmpFit estimate_postinverse(std::span<const Signal> outputs,
                            std::span<const Signal> inputs,
                            const GmpOrders& orders, double ridge,
                            cplx desired_gain) {
  if (desired_gain == cplx{} || !std::isfinite(std::abs(desired_gain))) {
    throw Error(ErrorKind::InvalidInput, "desired gain must be finite, nonzero");
  }
  std::vector<Signal> normalized;
  normalized.reserve(outputs.size());
  for (const auto& y : outputs) {
    std::vector<cplx> v(y.samples().begin(), y.samples().end());
    for (auto& s : v) s /= desired_gain;
    normalized.push_back(y.with_samples(std::move(v)));
  }
  return fit_gmp(normalized, inputs, orders, ridge);
}

std::string format_gmp_body(const GmpModel& model) {
  const auto& o = model.orders();
  std::string out = "orders " + std::to_string(o.memory_depth) + " " +
                    std::to_string(o.degree) + " " +
                    std::to_string(o.cross_depth) +
                    (o.odd_only ? " odd\n" : "\n");
  char line[128];
  for (int m = 0; m <= o.memory_depth; ++m) {
    for (int p = 0; p <= o.degree; ++p) {
      for (int g = 0; g <= o.cross_depth; ++g) {
        const cplx c = model.alpha(m, p, g);
        std::snprintf(line, sizeof line, "alpha %d %d %d %.17e %.17e\n", m, p,
                      g, c.real(), c.imag());
        out += line;
      }
    }
  }
  for (int m = 0; m <= o.memory_depth; ++m) {
    for (int p = 0; p <= o.degree; ++p) {
      for (int g = 1; g <= o.cross_depth; ++g) {
        const cplx c = model.beta(m, p, g);
        std::snprintf(line, sizeof line, "beta %d %d %d %.17e %.17e\n", m, p,
                      g, c.real(), c.imag());
        out += line;
      }
    }
  }
  return out;
}

GmpModel parse_gmp_body(std::span<const std::string> lines) {
  std::optional<GmpModel> model;
  for (const auto& line : lines) {
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "orders") {
      GmpOrders o;
      std::string flag;
      if (!(in >> o.memory_depth >> o.degree >> o.cross_depth)) {
        throw Error(ErrorKind::Io, "bad orders line: " + line);
      }
      o.odd_only = (in >> flag) && flag == "odd";
      model.emplace(o);
    } else if (key == "alpha" || key == "beta") {
      if (!model) throw Error(ErrorKind::Io, "coefficient before orders line");
      int m = 0;
      int p = 0;
      int g = 0;
      double re = 0.0;
      double im = 0.0;
      if (!(in >> m >> p >> g >> re >> im)) {
        throw Error(ErrorKind::Io, "bad coefficient line: " + line);
      }
      try {
        (key == "alpha" ? model->alpha(m, p, g) : model->beta(m, p, g)) =
            cplx(re, im);
      } catch (const Error&) {
        throw Error(ErrorKind::Io, "coefficient index out of range: " + line);
      }
    } else {
      throw Error(ErrorKind::Io, "unexpected line in GMP body: " + line);
    }
  }
  if (!model) throw Error(ErrorKind::Io, "missing orders line");
  return *model;
}

void write_gmp_model(const GmpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "ilcdpd-gmp 1\n" << format_gmp_body(model);
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

GmpModel read_gmp_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ilcdpd-gmp 1") {
    throw Error(ErrorKind::Io, "not a version-1 GMP model file: " +
                                   path.string());
  }
  std::vector<std::string> body;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') body.push_back(line);
  }
  return parse_gmp_body(body);
}

std::vector<GmpOrders> parse_order_grid(const std::string& text,
                                        bool odd_only) {
  std::vector<GmpOrders> grid;
  std::istringstream all(text);
  std::string item;
  while (std::getline(all, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream in(item);
    GmpOrders o;
    o.odd_only = odd_only;
    std::string rest;
    if (!(in >> o.memory_depth >> o.degree >> o.cross_depth) || (in >> rest)) {
      throw Error(ErrorKind::Config, "bad GMP order triple '" + item + "'");
    }
    o.validate();
    grid.push_back(o);
  }
  if (grid.empty()) throw Error(ErrorKind::Config, "empty GMP order grid");
  return grid;
}

}  // namespace ilcdpd
