// sgdyn: driver for the strain-gradient dynamics and homogenization runs.
//
//   sgdyn run spec.ini
//   sgdyn converge spec.ini --dts 4e-4 2e-4 1e-4 --reference 2.5e-5
//   sgdyn compare spec.ini --schemes gonzalez taylor_full --dts 1e-3 5e-4
//   sgdyn homogenize spec.ini --seed homogeneous
//   sgdyn check [spec.ini] [--seed N]
//   sgdyn spec [spec.ini]          print the effective spec

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgdyn/cli_io.hpp"

using namespace sgdyn;

namespace {

struct Overrides {
  std::string spec_path;
  std::string output;
  std::optional<double> t_end;
  std::optional<int> threads;
  std::string scheme;
  std::vector<double> dts;
  std::optional<double> reference;
  std::vector<std::string> schemes;
  std::vector<double> etas;
  std::string seed;
  std::optional<std::uint64_t> rng_seed;
};

RunSpec load(const Overrides& o) {
  RunSpec spec = o.spec_path.empty() ? RunSpec{} : load_run_spec(o.spec_path);
  if (!o.output.empty()) spec.output_dir = o.output;
  if (o.t_end) spec.t_end = *o.t_end;
  if (o.threads) spec.threads = *o.threads;
  if (!o.scheme.empty()) spec.scheme.kind = parse_scheme_kind(o.scheme);
  if (o.rng_seed) spec.seed = *o.rng_seed;
  if (!o.etas.empty()) spec.eta_values = o.etas;
  if (!o.seed.empty()) spec.homogenize_seed = o.seed;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strain-gradient elastodynamics with energy-consistent time stepping"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* c, bool spec_required) {
    auto* opt = c->add_option("spec", o.spec_path, "run spec (INI)");
    if (spec_required) opt->required();
    c->add_option("-o,--output", o.output, "output directory");
    c->add_option("--t-end", o.t_end, "final time");
    c->add_option("--threads", o.threads, "OpenMP threads (0: default)");
  };

  auto* run = app.add_subcommand("run", "time integration with energy ledger, snapshots and restart");
  common(run, true);

  auto* conv = app.add_subcommand("converge", "temporal convergence study");
  common(conv, true);
  conv->add_option("--scheme", o.scheme, "scheme kind");
  conv->add_option("--dts", o.dts, "time steps (at least three)")->delimiter(',');
  conv->add_option("--reference", o.reference, "reference time step");

  auto* cmp = app.add_subcommand("compare", "Newton iteration histogram per scheme and time step");
  common(cmp, true);
  cmp->add_option("--schemes", o.schemes, "scheme kinds")->delimiter(',');
  cmp->add_option("--dts", o.dts, "time steps")->delimiter(',');

  auto* hom = app.add_subcommand("homogenize", "effective response along Fbar = I + eta D");
  common(hom, true);
  hom->add_option("--seed", o.seed, "homogeneous, laminate or a restart file");
  hom->add_option("--eta", o.etas, "loading parameters")->delimiter(',');

  auto* chk = app.add_subcommand("check", "property checks on random states");
  common(chk, false);
  chk->add_option("--seed", o.rng_seed, "random seed");

  auto* show = app.add_subcommand("spec", "print the effective spec");
  common(show, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  return run_guarded(
      [&]() -> int {
        RunSpec spec = load(o);
        if (*run) return cmd_run(spec, std::cout);
        if (*conv) {
          if (!o.dts.empty()) spec.converge_dts = o.dts;
          if (o.reference) spec.converge_reference = *o.reference;
          return cmd_converge(spec, std::cout);
        }
        if (*cmp) {
          if (!o.schemes.empty()) spec.compare_schemes = o.schemes;
          if (!o.dts.empty()) spec.compare_dts = o.dts;
          return cmd_compare(spec, std::cout);
        }
        if (*hom) return cmd_homogenize(spec, std::cout);
        if (*chk) return cmd_check(spec, std::cout);
        spec.validate();
        std::cout << serialize_run_spec(spec);
        return kExitOk;
      },
      std::cerr);
}
