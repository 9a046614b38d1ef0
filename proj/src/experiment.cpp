#include "ilcdpd/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "ilcdpd/bla.hpp"
#include "ilcdpd/remote.hpp"
#include "ilcdpd/rng.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace ilcdpd {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"signal",
       {"class", "n", "sample_rate_hz", "carrier_hz", "excited", "bands",
        "controlled", "rms", "constellation", "papr_bounds_db",
        "validation_papr_bounds_db", "realizations", "seed", "validation_seed",
        "max_attempts"}},
      {"plant", {"preset", "remote", "noise_std", "noise_seed", "timeout_s"}},
      {"bla", {"realizations", "seed", "oob_ratio", "gain_floor_relative"}},
      {"ilc",
       {"max_iterations", "relaxation", "stop_tolerance", "divergence_factor",
        "averaging", "desired", "desired_gain", "noise_floor_repeats",
        "dump_iterations"}},
      {"gmp", {"orders", "ridge", "tie_relative", "odd_only"}},
      {"output", {"dir"}},
  };
  return keys;
}

[[noreturn]] void config_error(const std::string& key, const std::string& why) {
  throw Error(ErrorKind::Config, "config key " + key + ": " + why);
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const {
    auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    std::string s = *v;
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }

  std::string required(const std::string& section,
                       const std::string& key) const {
    auto v = get(section, key);
    if (!v || v->empty()) {
      throw Error(ErrorKind::Config,
                  "missing required config key " + section + "." + key);
    }
    return *v;
  }

 private:
  const pt::ptree& tree_;
};

double to_double(const std::string& name, const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    config_error(name, "'" + text + "' is not a number");
  }
  if (pos != text.size() || !std::isfinite(v)) {
    config_error(name, "'" + text + "' is not a finite number");
  }
  return v;
}

long to_long(const std::string& name, const std::string& text) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(text, &pos);
  } catch (const std::exception&) {
    config_error(name, "'" + text + "' is not an integer");
  }
  if (pos != text.size()) config_error(name, "'" + text + "' is not an integer");
  return v;
}

std::uint64_t to_u64(const std::string& name, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  if (!text.empty() && text[0] == '-') {
    config_error(name, "must be nonnegative");
  }
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    config_error(name, "'" + text + "' is not an unsigned integer");
  }
  if (pos != text.size()) {
    config_error(name, "'" + text + "' is not an unsigned integer");
  }
  return v;
}

std::size_t to_count(const std::string& name, const std::string& text) {
  return static_cast<std::size_t>(to_u64(name, text));
}

bool to_bool(const std::string& name, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  config_error(name, "'" + text + "' is not a boolean");
}

std::vector<std::string> words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::pair<long, long> to_range(const std::string& name,
                               const std::string& text) {
  const auto w = words(text);
  if (w.size() != 2) config_error(name, "expected two integers 'lo hi'");
  const long lo = to_long(name, w[0]);
  const long hi = to_long(name, w[1]);
  if (lo > hi) config_error(name, "lo must not exceed hi");
  return {lo, hi};
}

std::optional<std::pair<double, double>> to_bounds(const std::string& name,
                                                   const std::string& text) {
  if (text == "none") return std::nullopt;
  const auto w = words(text);
  if (w.size() != 2) config_error(name, "expected 'lo hi' in dB or 'none'");
  const double lo = to_double(name, w[0]);
  const double hi = to_double(name, w[1]);
  if (!(lo < hi)) config_error(name, "lo must be below hi");
  return std::make_pair(lo, hi);
}

std::vector<BandSpec> to_bands(const std::string& name,
                               const std::string& text) {
  std::vector<BandSpec> bands;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ';');) {
    const auto w = words(item);
    if (w.empty()) continue;
    if (w.size() != 2) config_error(name, "expected 'center width' per band");
    bands.push_back({to_long(name, w[0]), to_long(name, w[1])});
  }
  if (bands.empty()) config_error(name, "no bands given");
  return bands;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_bounds(const std::optional<std::pair<double, double>>& b) {
  if (!b) return "none";
  return fmt_double(b->first) + " " + fmt_double(b->second);
}

void log_line(const RunOptions& options, const std::string& text) {
  if (options.log) *options.log << text << std::endl;
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& s = signal;
  if (s.kind != "ofdm" && s.kind != "multisine" && s.kind != "multiband") {
    config_error("signal.class", "must be ofdm, multisine or multiband");
  }
  if (s.n < 16) config_error("signal.n", "must be at least 16");
  if (!(s.sample_rate_hz > 0.0)) {
    config_error("signal.sample_rate_hz", "must be positive");
  }
  if (!(s.carrier_hz >= 0.0)) config_error("signal.carrier_hz", "must be >= 0");
  if (!(s.rms > 0.0)) config_error("signal.rms", "must be positive");
  if (s.realizations < 2) {
    config_error("signal.realizations",
                 "at least 2 are needed (estimation plus validation pair)");
  }
  if (s.max_attempts < 1) config_error("signal.max_attempts", "must be >= 1");
  try {
    constellation_by_name(s.constellation);
  } catch (const Error& e) {
    config_error("signal.constellation", e.what());
  }
  const long half_lo = -static_cast<long>((s.n - 1) / 2);
  const long half_hi = static_cast<long>(s.n / 2);
  if (s.controlled_lo < half_lo || s.controlled_hi > half_hi) {
    config_error("signal.controlled", "range exceeds the DFT grid");
  }
  try {
    make_grid(s);
  } catch (const Error& e) {
    config_error(s.kind == "multiband" ? "signal.bands" : "signal.excited",
                 e.what());
  }
  if (plant.remote) {
    try {
      Endpoint::parse(*plant.remote);
    } catch (const Error& e) {
      config_error("plant.remote", e.what());
    }
    if (plant.noise_std || plant.noise_seed) {
      config_error("plant.remote",
                   "noise settings belong to the server, not the client");
    }
  }
  if (plant.noise_std && !(*plant.noise_std >= 0.0)) {
    config_error("plant.noise_std", "must be >= 0");
  }
  if (!(plant.timeout_s > 0.0)) config_error("plant.timeout_s", "must be > 0");
  if (bla.realizations < 2) config_error("bla.realizations", "must be >= 2");
  if (!(bla.oob_ratio > 0.0)) {
    config_error("bla.oob_ratio",
                 "must be positive so every controlled bin is excited");
  }
  if (!(bla.gain_floor_relative > 0.0 && bla.gain_floor_relative < 1.0)) {
    config_error("bla.gain_floor_relative", "must lie in (0, 1)");
  }
  try {
    ilc.loop.validate();
  } catch (const Error& e) {
    config_error("ilc", e.what());
  }
  if (const auto* g = std::get_if<ConstantGain>(&ilc.desired)) {
    if (g->gain == cplx{}) config_error("ilc.desired_gain", "must be nonzero");
  }
  if (ilc.noise_floor_repeats == 1) {
    config_error("ilc.noise_floor_repeats", "must be 0 or at least 2");
  }
  if (gmp.orders.empty()) config_error("gmp.orders", "empty order grid");
  for (const auto& o : gmp.orders) {
    try {
      o.validate();
    } catch (const Error& e) {
      config_error("gmp.orders", e.what());
    }
    if (static_cast<std::size_t>(o.max_lag()) >= s.n) {
      config_error("gmp.orders", o.to_string() + " needs more samples than n");
    }
  }
  if (!(gmp.ridge >= 0.0)) config_error("gmp.ridge", "must be >= 0");
  if (!(gmp.tie_relative >= 0.0)) config_error("gmp.tie_relative", "must be >= 0");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Config, std::string("config parse error: ") + e.what());
  }
  const auto& sch = schema();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(ErrorKind::Config,
                  "config key " + section + " is outside a section");
    }
    auto it = sch.find(section);
    if (it == sch.end()) {
      throw Error(ErrorKind::Config, "unknown config section [" + section + "]");
    }
    for (const auto& kv : body) {
      if (!it->second.count(kv.first)) {
        throw Error(ErrorKind::Config,
                    "unknown config key " + section + "." + kv.first);
      }
    }
  }

  const Reader r(tree);
  ExperimentConfig c;
  auto& s = c.signal;
  s.kind = r.required("signal", "class");
  s.n = to_count("signal.n", r.required("signal", "n"));
  s.sample_rate_hz =
      to_double("signal.sample_rate_hz", r.required("signal", "sample_rate_hz"));
  if (auto v = r.get("signal", "carrier_hz")) {
    s.carrier_hz = to_double("signal.carrier_hz", *v);
  }
  if (s.kind == "multiband") {
    s.bands = to_bands("signal.bands", r.required("signal", "bands"));
    if (r.get("signal", "excited")) {
      config_error("signal.excited", "not used by multiband signals");
    }
  } else {
    std::tie(s.excited_lo, s.excited_hi) =
        to_range("signal.excited", r.required("signal", "excited"));
    if (r.get("signal", "bands")) {
      config_error("signal.bands", "only used by multiband signals");
    }
  }
  std::tie(s.controlled_lo, s.controlled_hi) =
      to_range("signal.controlled", r.required("signal", "controlled"));
  if (auto v = r.get("signal", "rms")) s.rms = to_double("signal.rms", *v);
  if (auto v = r.get("signal", "constellation")) s.constellation = *v;
  if (auto v = r.get("signal", "papr_bounds_db")) {
    s.papr_bounds_db = to_bounds("signal.papr_bounds_db", *v);
  }
  if (auto v = r.get("signal", "validation_papr_bounds_db")) {
    s.validation_papr_bounds_db =
        to_bounds("signal.validation_papr_bounds_db", *v);
  }
  s.realizations =
      to_count("signal.realizations", r.required("signal", "realizations"));
  s.seed = to_u64("signal.seed", r.required("signal", "seed"));
  s.validation_seed =
      to_u64("signal.validation_seed", r.required("signal", "validation_seed"));
  if (auto v = r.get("signal", "max_attempts")) {
    s.max_attempts = to_count("signal.max_attempts", *v);
  }

  auto& p = c.plant;
  const auto preset = r.get("plant", "preset");
  const auto remote = r.get("plant", "remote");
  if (!preset && !remote) {
    throw Error(ErrorKind::Config,
                "missing required config key plant.preset (or plant.remote)");
  }
  if (preset) p.preset = *preset;
  if (remote) p.remote = *remote;
  if (auto v = r.get("plant", "noise_std")) {
    p.noise_std = to_double("plant.noise_std", *v);
  }
  if (auto v = r.get("plant", "noise_seed")) {
    p.noise_seed = to_u64("plant.noise_seed", *v);
  }
  if (auto v = r.get("plant", "timeout_s")) {
    p.timeout_s = to_double("plant.timeout_s", *v);
  }

  auto& b = c.bla;
  b.realizations = to_count("bla.realizations", r.required("bla", "realizations"));
  b.seed = to_u64("bla.seed", r.required("bla", "seed"));
  if (auto v = r.get("bla", "oob_ratio")) b.oob_ratio = to_double("bla.oob_ratio", *v);
  if (auto v = r.get("bla", "gain_floor_relative")) {
    b.gain_floor_relative = to_double("bla.gain_floor_relative", *v);
  }

  auto& il = c.ilc;
  if (auto v = r.get("ilc", "max_iterations")) {
    il.loop.max_iterations =
        static_cast<int>(to_long("ilc.max_iterations", *v));
  }
  if (auto v = r.get("ilc", "relaxation")) {
    il.loop.relaxation = to_double("ilc.relaxation", *v);
  }
  if (auto v = r.get("ilc", "stop_tolerance")) {
    il.loop.stop_tolerance = to_double("ilc.stop_tolerance", *v);
  }
  if (auto v = r.get("ilc", "divergence_factor")) {
    il.loop.divergence_factor = to_double("ilc.divergence_factor", *v);
  }
  if (auto v = r.get("ilc", "averaging")) {
    il.loop.averaging = static_cast<int>(to_long("ilc.averaging", *v));
  }
  const std::string desired = r.get("ilc", "desired").value_or("bla");
  if (desired == "bla") {
    il.desired = BlaReference{};
    if (r.get("ilc", "desired_gain")) {
      config_error("ilc.desired_gain", "only used with desired = gain");
    }
  } else if (desired == "gain") {
    const auto w = words(r.required("ilc", "desired_gain"));
    if (w.size() != 2) config_error("ilc.desired_gain", "expected 're im'");
    il.desired = ConstantGain{cplx{to_double("ilc.desired_gain", w[0]),
                                   to_double("ilc.desired_gain", w[1])}};
  } else {
    config_error("ilc.desired", "must be bla or gain");
  }
  if (auto v = r.get("ilc", "noise_floor_repeats")) {
    il.noise_floor_repeats = to_count("ilc.noise_floor_repeats", *v);
  }
  if (auto v = r.get("ilc", "dump_iterations")) {
    il.dump_iterations = to_bool("ilc.dump_iterations", *v);
  }

  auto& g = c.gmp;
  if (auto v = r.get("gmp", "odd_only")) g.odd_only = to_bool("gmp.odd_only", *v);
  try {
    g.orders = parse_order_grid(r.required("gmp", "orders"), g.odd_only);
  } catch (const Error& e) {
    config_error("gmp.orders", e.what());
  }
  if (auto v = r.get("gmp", "ridge")) g.ridge = to_double("gmp.ridge", *v);
  if (auto v = r.get("gmp", "tie_relative")) {
    g.tie_relative = to_double("gmp.tie_relative", *v);
  }

  if (auto v = r.get("output", "dir")) c.output_dir = *v;

  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& s = c.signal;
  o << "[signal]\n"
    << "class = " << s.kind << "\n"
    << "n = " << s.n << "\n"
    << "sample_rate_hz = " << fmt_double(s.sample_rate_hz) << "\n"
    << "carrier_hz = " << fmt_double(s.carrier_hz) << "\n";
  if (s.kind == "multiband") {
    o << "bands =";
    for (std::size_t i = 0; i < s.bands.size(); ++i) {
      o << (i ? "; " : " ") << s.bands[i].center_bin << " " << s.bands[i].width;
    }
    o << "\n";
  } else {
    o << "excited = " << s.excited_lo << " " << s.excited_hi << "\n";
  }
  o << "controlled = " << s.controlled_lo << " " << s.controlled_hi << "\n"
    << "rms = " << fmt_double(s.rms) << "\n"
    << "constellation = " << s.constellation << "\n"
    << "papr_bounds_db = " << fmt_bounds(s.papr_bounds_db) << "\n"
    << "validation_papr_bounds_db = " << fmt_bounds(s.validation_papr_bounds_db)
    << "\n"
    << "realizations = " << s.realizations << "\n"
    << "seed = " << s.seed << "\n"
    << "validation_seed = " << s.validation_seed << "\n"
    << "max_attempts = " << s.max_attempts << "\n\n";

  const auto& p = c.plant;
  o << "[plant]\n";
  if (p.remote) {
    o << "remote = " << *p.remote << "\n";
  } else {
    o << "preset = " << p.preset << "\n";
  }
  if (p.noise_std) o << "noise_std = " << fmt_double(*p.noise_std) << "\n";
  if (p.noise_seed) o << "noise_seed = " << *p.noise_seed << "\n";
  o << "timeout_s = " << fmt_double(p.timeout_s) << "\n\n";

  const auto& b = c.bla;
  o << "[bla]\n"
    << "realizations = " << b.realizations << "\n"
    << "seed = " << b.seed << "\n"
    << "oob_ratio = " << fmt_double(b.oob_ratio) << "\n"
    << "gain_floor_relative = " << fmt_double(b.gain_floor_relative) << "\n\n";

  const auto& il = c.ilc;
  o << "[ilc]\n"
    << "max_iterations = " << il.loop.max_iterations << "\n"
    << "relaxation = " << fmt_double(il.loop.relaxation) << "\n"
    << "stop_tolerance = " << fmt_double(il.loop.stop_tolerance) << "\n"
    << "divergence_factor = " << fmt_double(il.loop.divergence_factor) << "\n"
    << "averaging = " << il.loop.averaging << "\n";
  if (const auto* g = std::get_if<ConstantGain>(&il.desired)) {
    o << "desired = gain\n"
      << "desired_gain = " << fmt_double(g->gain.real()) << " "
      << fmt_double(g->gain.imag()) << "\n";
  } else {
    o << "desired = bla\n";
  }
  o << "noise_floor_repeats = " << il.noise_floor_repeats << "\n"
    << "dump_iterations = " << (il.dump_iterations ? "true" : "false") << "\n\n";

  const auto& g = c.gmp;
  o << "[gmp]\n"
    << "orders =";
  for (std::size_t i = 0; i < g.orders.size(); ++i) {
    o << (i ? "; " : " ") << g.orders[i].memory_depth << " "
      << g.orders[i].degree << " " << g.orders[i].cross_depth;
  }
  o << "\n"
    << "ridge = " << fmt_double(g.ridge) << "\n"
    << "tie_relative = " << fmt_double(g.tie_relative) << "\n"
    << "odd_only = " << (g.odd_only ? "true" : "false") << "\n\n";

  o << "[output]\n"
    << "dir = " << c.output_dir << "\n";
  return o.str();
}

std::string fingerprint(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output_dir.clear();
  const std::string text = to_ini(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig resolve(ExperimentConfig config, const RunOptions& options) {
  if (options.seed_override) config.signal.seed = *options.seed_override;
  if (options.out) config.output_dir = options.out->string();
  if (config.output_dir.empty()) {
    throw Error(ErrorKind::Config,
                "missing required config key output.dir (or pass --out)");
  }
  return config;
}

SurrogatePa make_surrogate(const PlantConfig& config) {
  SurrogatePa pa = load_preset(config.preset);
  if (config.noise_std) pa.noise_std = *config.noise_std;
  if (config.noise_seed) pa.noise_seed = *config.noise_seed;
  return pa;
}

std::unique_ptr<Plant> make_plant(const PlantConfig& config) {
  if (config.remote) {
    const auto ms = std::chrono::milliseconds(
        static_cast<long long>(std::llround(config.timeout_s * 1000.0)));
    return std::make_unique<RemotePlant>(Endpoint::parse(*config.remote), ms);
  }
  return std::make_unique<SurrogatePlant>(make_surrogate(config));
}

FrequencyGrid make_grid(const SignalConfig& s) {
  if (s.kind != "multiband") {
    return FrequencyGrid::from_bands(s.n, s.excited_lo, s.excited_hi,
                                     s.controlled_lo, s.controlled_hi);
  }
  MultibandSpec spec{s.n, s.bands, {}, 1.0, 0, 1.0, 0.0};
  const auto excited = multiband_bins(spec);
  const auto span = FrequencyGrid::from_bands(s.n, s.controlled_lo,
                                              s.controlled_hi, s.controlled_lo,
                                              s.controlled_hi);
  const auto ctrl = span.controlled_bins();
  return FrequencyGrid(s.n, excited,
                       std::vector<std::size_t>(ctrl.begin(), ctrl.end()));
}

GeneratedSignal make_reference(
    const SignalConfig& s, std::uint64_t seed,
    const std::optional<std::pair<double, double>>& papr_bounds) {
  const FrequencyGrid grid = make_grid(s);
  const auto tones = static_cast<double>(grid.excited_bins().size());
  const double amplitude = s.rms / std::sqrt(tones);
  if (s.kind == "ofdm") {
    OfdmSpec spec{grid,        constellation_by_name(s.constellation),
                  amplitude,   papr_bounds,
                  seed,        s.max_attempts,
                  s.sample_rate_hz, s.carrier_hz};
    return gen_ofdm(spec);
  }
  const std::size_t attempts = papr_bounds ? s.max_attempts : 1;
  double lo = INFINITY;
  double hi = -INFINITY;
  for (std::size_t a = 0; a < attempts; ++a) {
    const std::uint64_t sub = derive_seed(seed, a);
    Signal x = [&] {
      if (s.kind == "multisine") {
        MultisineSpec spec{grid,
                           std::vector<double>(grid.excited_bins().size(),
                                               amplitude),
                           sub, s.sample_rate_hz, s.carrier_hz};
        return gen_multisine(spec);
      }
      MultibandSpec spec{s.n,         s.bands,
                         constellation_by_name(s.constellation),
                         amplitude,   sub,
                         s.sample_rate_hz, s.carrier_hz};
      return gen_multiband(spec);
    }();
    const double papr = papr_db(x);
    lo = std::min(lo, papr);
    hi = std::max(hi, papr);
    if (!papr_bounds || (papr >= papr_bounds->first && papr <= papr_bounds->second)) {
      return GeneratedSignal{std::move(x), a, papr};
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "no %s realization within PAPR bounds after %zu attempts "
                "(achieved %.3f..%.3f dB)",
                s.kind.c_str(), attempts, lo, hi);
  throw Error(ErrorKind::GenerationFailed, buf);
}

namespace {

const char* kIncomplete = "INCOMPLETE";

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

bool nonempty_dir(const fs::path& dir) {
  std::error_code ec;
  return fs::is_directory(dir, ec) && !fs::is_empty(dir, ec);
}

fs::path run_dir(const ExperimentConfig& c) { return fs::path(c.output_dir); }

/// Fresh run directory for commands that start a run.
void start_run(const ExperimentConfig& c, const RunOptions& options) {
  const fs::path dir = run_dir(c);
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) {
      throw Error(ErrorKind::Io, dir.string() + " exists and is not a directory");
    }
    if (!fs::is_empty(dir, ec)) {
      if (!options.force) {
        throw Error(ErrorKind::Io, "refusing to overwrite run directory " +
                                       dir.string() + " (pass --force)");
      }
      fs::remove_all(dir, ec);
      if (ec) throw Error(ErrorKind::Io, "cannot clear " + dir.string());
    }
  }
  for (const char* sub : {"signals", "frf", "ilc", "models", "report"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + (dir / sub).string());
  }
  write_text(dir / kIncomplete, "run in progress or interrupted\n");
  write_text(dir / "config.ini", to_ini(c));
}

/// Existing run directory for commands that continue one. `owned` is the
/// subdirectory this command writes.
void continue_run(const ExperimentConfig& c, const RunOptions& options,
                  const char* owned) {
  const fs::path dir = run_dir(c);
  const fs::path snapshot = dir / "config.ini";
  if (!fs::exists(snapshot)) {
    throw Error(ErrorKind::Io, "no run directory at " + dir.string() +
                                   " (config.ini missing; run 'bla' first)");
  }
  const std::string current = to_ini(c);
  if (read_text(snapshot) != current) {
    if (!options.force) {
      throw Error(ErrorKind::Config,
                  "run directory " + dir.string() +
                      " was created with a different config (pass --force)");
    }
    write_text(snapshot, current);
  }
  const fs::path sub = dir / owned;
  if (nonempty_dir(sub)) {
    if (!options.force) {
      throw Error(ErrorKind::Io, "refusing to overwrite " + sub.string() +
                                     " (pass --force)");
    }
    std::error_code ec;
    fs::remove_all(sub, ec);
  }
  std::error_code ec;
  fs::create_directories(sub, ec);
  fs::create_directories(dir / "signals", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + sub.string());
  write_text(dir / kIncomplete, "run in progress or interrupted\n");
}

void finish_run(const ExperimentConfig& c) {
  std::error_code ec;
  fs::remove(run_dir(c) / kIncomplete, ec);
}

std::string indexed(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.csv", stem, i);
  return buf;
}

FrfEstimate load_frf(const ExperimentConfig& c) {
  const fs::path p = run_dir(c) / "frf" / "frf.csv";
  if (!fs::exists(p)) {
    throw Error(ErrorKind::Io, "missing " + p.string() + " (run 'bla' first)");
  }
  return read_frf_csv(p);
}

Signal load_signal(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorKind::Io, "missing " + p.string());
  return read_signal_csv(p);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

void write_cv_csv(const CrossValidationResult& cv, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "n_m,n_p,n_g,num_terms,validation_rms,validation_nrmse,residual_rms,"
         "selected,skipped,message\n";
  char buf[256];
  for (const auto& row : cv.rows) {
    std::string msg = row.message;
    for (auto& ch : msg) {
      if (ch == ',' || ch == '\n') ch = ' ';
    }
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%zu,%.17e,%.17e,%.17e,%s,%s,",
                  row.orders.memory_depth, row.orders.degree,
                  row.orders.cross_depth, row.num_terms, row.validation_rms,
                  row.validation_nrmse, row.residual_rms,
                  bool_str(!row.skipped && row.orders == cv.best).c_str(),
                  bool_str(row.skipped).c_str());
    out << buf << msg << "\n";
  }
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

bool leaks(const SignalConfig& s) {
  return s.validation_seed >= s.seed &&
         s.validation_seed - s.seed < s.realizations;
}

void bla_step(const ExperimentConfig& c, const RunOptions& options,
              Plant& plant) {
  const FrequencyGrid grid = make_grid(c.signal);
  const auto ctrl = grid.controlled_bins();
  const std::vector<std::size_t> ctrl_bins(ctrl.begin(), ctrl.end());
  const std::vector<std::size_t> inband(grid.excited_bins().begin(),
                                        grid.excited_bins().end());
  const FrequencyGrid bla_grid(c.signal.n, ctrl_bins, ctrl_bins);
  const MultisineSpec spec =
      flat_multisine(bla_grid, inband, c.signal.rms, c.bla.oob_ratio,
                     c.bla.seed, c.signal.sample_rate_hz, c.signal.carrier_hz);
  const FrfEstimate frf = estimate_bla(plant, spec, c.bla.realizations);
  write_frf_csv(frf, run_dir(c) / "frf" / "frf.csv");
  const LearningFilter filt =
      invert_frf(frf, default_gain_floor(frf, c.bla.gain_floor_relative));
  log_line(options, "bla: " + std::to_string(c.bla.realizations) +
                        " realizations, " + std::to_string(ctrl.size()) +
                        " bins, " + std::to_string(filt.dropped_bins.size()) +
                        " below the gain floor");
}

void ilc_step_all(const ExperimentConfig& c, const RunOptions& options,
                  Plant& plant) {
  const fs::path dir = run_dir(c);
  const FrfEstimate frf = load_frf(c);
  const LearningFilter filt =
      invert_frf(frf, default_gain_floor(frf, c.bla.gain_floor_relative));
  std::ofstream summary(dir / "ilc" / "summary.csv");
  if (!summary) throw Error(ErrorKind::Io, "cannot write ilc/summary.csv");
  summary << "realization,papr_db,papr_attempt,iterations,converged,diverged,"
             "best_index,plateau_iteration,initial_db,best_db\n";
  std::vector<std::vector<CurvePoint>> curves;
  char buf[256];
  for (std::size_t i = 0; i < c.signal.realizations; ++i) {
    const GeneratedSignal ref =
        make_reference(c.signal, c.signal.seed + i, c.signal.papr_bounds_db);
    const Spectrum yd = make_desired(ref.signal, c.ilc.desired, frf);
    const IlcTrajectory traj = run_ilc(plant, ref.signal, yd, filt, c.ilc.loop);
    write_signal_csv(ref.signal, dir / "signals" / indexed("reference", i));
    write_signal_csv(traj.best_input(),
                     dir / "signals" / indexed("predistorted", i));
    write_signal_csv(traj.outputs.front(),
                     dir / "signals" / indexed("uncompensated_output", i));
    write_trajectory_csv(traj, dir / "ilc" / indexed("trajectory", i));
    if (c.ilc.dump_iterations) {
      std::snprintf(buf, sizeof buf, "iterations_%02zu", i);
      const fs::path sub = dir / "ilc" / buf;
      fs::create_directories(sub);
      for (std::size_t j = 0; j < traj.inputs.size(); ++j) {
        write_signal_csv(traj.inputs[j], sub / indexed("u", j));
        write_signal_csv(traj.outputs[j], sub / indexed("y", j));
      }
    }
    auto curve = convergence_curve(traj);
    const std::size_t plateau = plateau_iteration(curve);
    std::snprintf(buf, sizeof buf, "%zu,%.17e,%zu,%zu,%s,%s,%zu,%zu,%.17e,%.17e\n",
                  i, ref.papr_db, ref.realization_index, traj.iterations_run(),
                  bool_str(traj.converged).c_str(),
                  bool_str(traj.diverged).c_str(), traj.best_index, plateau,
                  curve.front().error_db, curve[traj.best_index].error_db);
    summary << buf;
    if (traj.diverged && options.log) {
      *options.log << "warning: ILC diverged on realization " << i
                   << "; using iteration " << traj.best_index << "\n";
    }

    if (i == 0 && c.ilc.noise_floor_repeats >= 2) {
      std::vector<Signal> reps;
      for (std::size_t k = 0; k < c.ilc.noise_floor_repeats; ++k) {
        reps.push_back(plant.apply(traj.best_input()));
      }
      const NoiseFloorEstimate nf = noise_floor(reps);
      const auto bins = filt.grid.controlled_bins();
      const double floor_db = mean_floor_db(nf, bins);
      const double rel_db = floor_db - power_db(traj.desired_norm *
                                                traj.desired_norm);
      double plateau_db = 0.0;
      for (std::size_t j = plateau; j < curve.size(); ++j) {
        plateau_db += curve[j].error_db;
      }
      plateau_db /= static_cast<double>(curve.size() - plateau);
      std::ofstream nfo(dir / "ilc" / "noise_floor.csv");
      nfo << "bin,freq_hz,power_db\n";
      for (std::size_t k = 0; k < nf.per_bin_db.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17e,%.17e\n", k,
                      bin_frequency_hz(k, c.signal.n, c.signal.sample_rate_hz),
                      nf.per_bin_db[k]);
        nfo << buf;
      }
      std::snprintf(buf, sizeof buf,
                    "method = %s\nrepeats = %zu\nfloor_db = %.17e\n"
                    "floor_relative_db = %.17e\nplateau_db = %.17e\n",
                    nf.method.c_str(), c.ilc.noise_floor_repeats, floor_db,
                    rel_db, plateau_db);
      write_text(dir / "ilc" / "noise_floor.txt", buf);
      if (!nfo) throw Error(ErrorKind::Io, "cannot write ilc/noise_floor.csv");
    }
    curves.push_back(std::move(curve));
  }
  summary.flush();
  if (!summary) throw Error(ErrorKind::Io, "write failed: ilc/summary.csv");

  std::ofstream conv(dir / "ilc" / "convergence.csv");
  conv << "iteration";
  std::size_t longest = 0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    conv << ",realization_" << i;
    longest = std::max(longest, curves[i].size());
  }
  conv << "\n";
  for (std::size_t j = 0; j < longest; ++j) {
    conv << j;
    for (const auto& curve : curves) {
      if (j < curve.size()) {
        std::snprintf(buf, sizeof buf, ",%.17e", curve[j].error_db);
        conv << buf;
      } else {
        conv << ",";
      }
    }
    conv << "\n";
  }
  conv.flush();
  if (!conv) throw Error(ErrorKind::Io, "write failed: ilc/convergence.csv");
  log_line(options, "ilc: " + std::to_string(c.signal.realizations) +
                        " realizations done");
}

void fit_step(const ExperimentConfig& c, const RunOptions& options) {
  const fs::path dir = run_dir(c);
  const FrfEstimate frf = load_frf(c);
  std::vector<Signal> refs;
  std::vector<Signal> pre;
  std::vector<Signal> normalized_out;
  for (std::size_t i = 0; i < c.signal.realizations; ++i) {
    refs.push_back(load_signal(dir / "signals" / indexed("reference", i)));
    pre.push_back(load_signal(dir / "signals" / indexed("predistorted", i)));
    normalized_out.push_back(remove_desired_gain(
        load_signal(dir / "signals" / indexed("uncompensated_output", i)),
        c.ilc.desired, frf));
  }
  CrossValidationOptions opts;
  opts.ridge = c.gmp.ridge;
  opts.tie_relative = c.gmp.tie_relative;
  opts.log = options.log;

  const auto pre_cv = cross_validate(refs, pre, c.gmp.orders, opts);
  write_gmp_model(pre_cv.model, dir / "models" / "preinverse.gmp");
  write_cv_csv(pre_cv, dir / "models" / "cv_preinverse.csv");
  log_line(options, "fit: pre-inverse orders " + pre_cv.best.to_string());

  // Post-inverse: trained on the measurement with u = r, mapping the
  // gain-normalized output back onto the input that produced it.
  const auto post_cv = cross_validate(normalized_out, refs, c.gmp.orders, opts);
  write_gmp_model(post_cv.model, dir / "models" / "postinverse.gmp");
  write_cv_csv(post_cv, dir / "models" / "cv_postinverse.csv");
  log_line(options, "fit: post-inverse orders " + post_cv.best.to_string());
}

ValidationReport validate_step(const ExperimentConfig& c,
                               const RunOptions& options, Plant& plant) {
  const fs::path dir = run_dir(c);
  const FrfEstimate frf = load_frf(c);
  const fs::path pre_path = dir / "models" / "preinverse.gmp";
  const fs::path post_path = dir / "models" / "postinverse.gmp";
  for (const auto& p : {pre_path, post_path}) {
    if (!fs::exists(p)) {
      throw Error(ErrorKind::Io, "model file not found: " + p.string());
    }
  }
  const GmpModel pre = read_gmp_model(pre_path);
  const GmpModel post = read_gmp_model(post_path);

  std::string notes;
  if (leaks(c.signal)) {
    const std::string w =
        "validation_seed " + std::to_string(c.signal.validation_seed) +
        " is also an estimation seed; validation data leaks into the fit";
    if (options.log) *options.log << "warning: " << w << "\n";
    notes += "warning = " + w + "\n";
  }

  const GeneratedSignal ref = make_reference(
      c.signal, c.signal.validation_seed, c.signal.validation_papr_bounds_db);
  const Signal yd = idft(make_desired(ref.signal, c.ilc.desired, frf));
  write_signal_csv(ref.signal, dir / "signals" / "validation_reference.csv");
  write_signal_csv(yd, dir / "signals" / "validation_desired.csv");

  ValidationReport report;
  report.papr_db = ref.papr_db;
  report.fingerprint = fingerprint(c);
  const std::pair<const char*, const GmpModel*> cases[] = {
      {"uncompensated", nullptr}, {"postinverse", &post}, {"preinverse", &pre}};
  for (const auto& [name, model] : cases) {
    const Signal u = model ? apply_gmp(*model, ref.signal) : ref.signal;
    const Signal y = plant.apply(u);
    write_signal_csv(y, dir / "signals" /
                            (std::string("validation_output_") + name + ".csv"));
    report.cases.push_back({name, nrmse(yd, y), error_spectrum_db(yd, y)});
  }

  const std::string preset_id =
      c.plant.remote ? "remote:" + *c.plant.remote
                     : make_surrogate(c.plant).preset_id;
  notes += "plant = " + preset_id + "\n";
  notes += "seed = " + std::to_string(c.signal.seed) + "\n";
  notes += "realizations = " + std::to_string(c.signal.realizations) + "\n";
  notes += "validation_seed = " + std::to_string(c.signal.validation_seed) + "\n";
  notes += "bla_seed = " + std::to_string(c.bla.seed) + "\n";
  notes += "preinverse_orders = " + pre.orders().to_string() + "\n";
  notes += "postinverse_orders = " + post.orders().to_string() + "\n";
  report.summary_notes = notes;

  write_report_summary(report, dir / "report" / "summary.txt");
  write_nrmse_csv(report, dir / "report" / "nrmse.csv");
  write_error_spectra_csv(report, c.signal.n, c.signal.sample_rate_hz,
                          dir / "report" / "error_spectra.csv");
  for (const auto& cs : report.cases) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "validate: nrmse %-13s %.6g", cs.name.c_str(),
                  cs.nrmse);
    log_line(options, buf);
  }
  return report;
}

}  // namespace

void cmd_bla(const ExperimentConfig& config, const RunOptions& options) {
  const ExperimentConfig c = resolve(config, options);
  auto plant = make_plant(c.plant);
  start_run(c, options);
  bla_step(c, options, *plant);
  finish_run(c);
}

void cmd_ilc(const ExperimentConfig& config, const RunOptions& options) {
  const ExperimentConfig c = resolve(config, options);
  auto plant = make_plant(c.plant);
  continue_run(c, options, "ilc");
  ilc_step_all(c, options, *plant);
  finish_run(c);
}

void cmd_fit(const ExperimentConfig& config, const RunOptions& options) {
  const ExperimentConfig c = resolve(config, options);
  continue_run(c, options, "models");
  fit_step(c, options);
  finish_run(c);
}

ValidationReport cmd_validate(const ExperimentConfig& config,
                              const RunOptions& options) {
  const ExperimentConfig c = resolve(config, options);
  auto plant = make_plant(c.plant);
  continue_run(c, options, "report");
  auto report = validate_step(c, options, *plant);
  finish_run(c);
  return report;
}

ValidationReport cmd_full(const ExperimentConfig& config,
                          const RunOptions& options) {
  const ExperimentConfig c = resolve(config, options);
  auto plant = make_plant(c.plant);
  start_run(c, options);
  bla_step(c, options, *plant);
  ilc_step_all(c, options, *plant);
  fit_step(c, options);
  auto report = validate_step(c, options, *plant);
  finish_run(c);
  return report;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return kExitConfig;
    case ErrorKind::PlantDiverged:
    case ErrorKind::Connection:
    case ErrorKind::Timeout:
    case ErrorKind::RemoteError:
    case ErrorKind::Protocol:
      return kExitPlant;
    case ErrorKind::UndefinedStatistic:
    case ErrorKind::GenerationFailed:
    case ErrorKind::DegenerateExcitation:
    case ErrorKind::UnusableBla:
    case ErrorKind::Divergence:
    case ErrorKind::IllConditioned:
      return kExitNumerical;
    case ErrorKind::Io:
      return kExitIo;
    case ErrorKind::InvalidInput:
      break;
  }
  return kExitOther;
}

}  // namespace ilcdpd
