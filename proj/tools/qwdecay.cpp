#include "qwdecay/qwdecay.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string outdir;
  std::optional<int> L;
  std::optional<std::uint64_t> seed;
  std::optional<int> refine;
  std::optional<double> delta_fraction;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out) {
  cmd->add_option("config", args.config_path, "configuration file")->required();
  if (needs_out) cmd->add_option("-o,--out", args.outdir, "output directory")->required();
  cmd->add_option("--L", args.L, "override box side length (odd)");
  cmd->add_option("--seed", args.seed, "override random seed");
  cmd->add_option("--refine", args.refine, "override momentum grid refinement");
  cmd->add_option("--delta-fraction", args.delta_fraction, "override decay-rate fraction in (0,1)");
}

qwdecay::WalkConfig load(const CommonArgs& args) {
  qwdecay::WalkConfig cfg = qwdecay::load_config(args.config_path);
  qwdecay::ConfigOverrides ov;
  ov.L = args.L;
  ov.seed = args.seed;
  ov.refine = args.refine;
  ov.delta_fraction = args.delta_fraction;
  qwdecay::apply_overrides(cfg, ov);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coined-walk spectral certification toolkit"};
  app.require_subcommand(1);

  CommonArgs validate_args, spectrum_args, certify_args, bounds_args;
  CLI::App* validate = app.add_subcommand("validate", "check a configuration and echo the report");
  add_common(validate, validate_args, false);
  CLI::App* spectrum = app.add_subcommand("spectrum", "write eigenvalues and bulk arcs");
  add_common(spectrum, spectrum_args, true);
  CLI::App* certify = app.add_subcommand("certify", "detect discrete eigenpairs and certify decay");
  add_common(certify, certify_args, true);
  CLI::App* bounds = app.add_subcommand("bounds", "sweep the commutator bounds");
  add_common(bounds, bounds_args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : qwdecay::kExitConfig;
  }

  try {
    if (validate->parsed()) return qwdecay::run_validate(load(validate_args), std::cout);
    if (spectrum->parsed()) return qwdecay::run_spectrum(load(spectrum_args), spectrum_args.outdir);
    if (certify->parsed()) return qwdecay::run_certify(load(certify_args), certify_args.outdir);
    if (bounds->parsed()) return qwdecay::run_bounds(load(bounds_args), bounds_args.outdir);
  } catch (const qwdecay::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qwdecay::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qwdecay::kExitConfig;
  }
  return qwdecay::kExitConfig;
}
