// ilcdpd: command-line runner for the ILC/GMP predistortion pipelines.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ilcdpd/experiment.hpp"
#include "ilcdpd/remote.hpp"

using namespace ilcdpd;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required) {
  auto* opt = cmd->add_option("--config", a.config, "experiment config (INI)");
  if (config_required) opt->required();
  cmd->add_option("--out", a.out, "run directory (overrides output.dir)");
  cmd->add_option("--seed-override", a.seed_override,
                  "replace signal.seed");
  cmd->add_flag("--force", a.force, "overwrite existing outputs");
  cmd->add_flag("-q,--quiet", a.quiet, "no progress output");
}

ExperimentConfig config_for(const CommonArgs& a) {
  if (!a.config.empty()) return load_config(a.config);
  if (a.out.empty()) {
    throw Error(ErrorKind::Config, "pass --config, or --out with an existing run");
  }
  return load_config(std::filesystem::path(a.out) / "config.ini");
}

RunOptions options_for(const CommonArgs& a) {
  RunOptions o;
  if (!a.out.empty()) o.out = a.out;
  o.force = a.force;
  o.seed_override = a.seed_override;
  o.log = a.quiet ? nullptr : &std::cerr;
  return o;
}

int serve(const std::string& preset, const std::string& bind,
          std::uint32_t max_count, std::optional<double> noise_std,
          std::optional<std::uint64_t> noise_seed) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  PlantConfig pc;
  pc.preset = preset;
  pc.noise_std = noise_std;
  pc.noise_seed = noise_seed;
  auto plant = std::make_shared<SurrogatePlant>(make_surrogate(pc));
  ServerOptions opts;
  opts.bind = Endpoint::parse(bind);
  opts.max_count = max_count;
  PlantServer server(plant, opts);
  std::printf("listening on %s:%u preset %s\n", opts.bind.host.c_str(),
              static_cast<unsigned>(server.port()),
              plant->pa().preset_id.c_str());
  std::fflush(stdout);

  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  std::fprintf(stderr, "served %llu requests\n",
               static_cast<unsigned long long>(server.requests_served()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ILC-based predistortion toolkit"};
  app.require_subcommand(1);

  CommonArgs a;
  auto* bla = app.add_subcommand("bla", "estimate the BLA and write frf/");
  add_common(bla, a, true);
  auto* ilc = app.add_subcommand("ilc", "run ILC per reference realization");
  add_common(ilc, a, false);
  auto* fit = app.add_subcommand("fit", "fit GMP pre- and post-inverses");
  add_common(fit, a, false);
  auto* val = app.add_subcommand("validate", "validate models on a new signal");
  add_common(val, a, false);
  auto* full = app.add_subcommand("full", "bla, ilc, fit and validate");
  add_common(full, a, true);

  std::string preset = "builtin:mild-v1";
  std::string bind = "127.0.0.1:5025";
  std::uint32_t max_count = wire::kDefaultMaxCount;
  std::optional<double> noise_std;
  std::optional<std::uint64_t> noise_seed;
  auto* srv = app.add_subcommand("serve", "serve a surrogate plant over TCP");
  srv->add_option("--preset", preset, "builtin:mild-v1 or a preset file");
  srv->add_option("--endpoint", bind, "host:port to bind (port 0 = any)");
  srv->add_option("--max-count", max_count, "largest accepted sample count");
  srv->add_option("--noise-std", noise_std, "override the preset noise std");
  srv->add_option("--noise-seed", noise_seed, "override the preset noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (srv->parsed()) {
      return serve(preset, bind, max_count, noise_std, noise_seed);
    }
    const ExperimentConfig cfg = config_for(a);
    const RunOptions opts = options_for(a);
    if (bla->parsed()) {
      cmd_bla(cfg, opts);
    } else if (ilc->parsed()) {
      cmd_ilc(cfg, opts);
    } else if (fit->parsed()) {
      cmd_fit(cfg, opts);
    } else if (val->parsed()) {
      cmd_validate(cfg, opts);
    } else if (full->parsed()) {
      cmd_full(cfg, opts);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}
