// ncsn: train, sample, inpaint, eval and the toy reproductions.
//
//   ncsn <command> --config PATH [--seed N] [--out DIR]
//   ncsn repro fig2|fig3|manifold --config PATH [--seed N] [--out DIR]
//
// Exit codes: 0 ok, 2 config, 3 numerical, 4 I/O, 1 anything else. Failures
// print a single line: error: kind=<kind> code=<exit> message="<text>".

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "ncsn/ncsn.hpp"

namespace {

namespace ex = ncsn::experiments;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int exit_code(const ncsn::Error& e) {
  if (dynamic_cast<const ncsn::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ncsn::NumericalError*>(&e)) return 3;
  if (dynamic_cast<const ncsn::IoError*>(&e)) return 4;
  return 1;
}

int fail(const std::string& kind, int code, std::string message) {
  for (char& ch : message)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << "error: kind=" << kind << " code=" << code << " message=\"" << message << "\"\n";
  return code;
}

ex::Run load(const Options& o) {
  auto cfg = ncsn::ExperimentConfig::from_file(o.config);
  std::optional<std::filesystem::path> out;
  if (o.out) out = std::filesystem::path(*o.out);
  return ex::make_run(std::move(cfg), o.seed, out);
}

void print_fig3(const ex::Fig3Report& r) {
  for (const auto& m : r.methods) {
    std::cout << m.name << ": ";
    if (m.diverged) {
      std::cout << "diverged\n";
      continue;
    }
    for (std::size_t k = 0; k < m.fractions.size(); ++k) std::cout << (k ? " " : "") << m.fractions[k];
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-conditional score networks on toy distributions"};
  app.require_subcommand(1);
  Options opt;
  std::function<void(const ex::Run&)> action;

  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "experiment config file")->required();
    cmd->add_option("--seed", opt.seed, "overrides [run] seed");
    cmd->add_option("--out", opt.out, "output directory, overrides [run] out");
  };

  auto* train = app.add_subcommand("train", "fit a score network and write a checkpoint");
  add_common(train);
  train->callback([&] {
    action = [](const ex::Run& run) {
      const auto r = ex::cmd_train(run);
      std::cout << "loss " << r.first_loss << " -> " << r.final_loss << "\ncheckpoint " << r.checkpoint.string() << '\n';
    };
  });

  auto* sample = app.add_subcommand("sample", "annealed Langevin sampling from a checkpoint");
  add_common(sample);
  sample->callback([&] {
    action = [](const ex::Run& run) { std::cout << "samples " << ex::cmd_sample(run).rows() << '\n'; };
  });

  auto* inpaint = app.add_subcommand("inpaint", "masked annealed Langevin sampling from a checkpoint");
  add_common(inpaint);
  inpaint->callback([&] {
    action = [](const ex::Run& run) { std::cout << "chains " << ex::cmd_inpaint(run).rows() << '\n'; };
  });

  auto* eval = app.add_subcommand("eval", "score error, sigma-scaled norms and mode weights of a checkpoint");
  add_common(eval);
  eval->callback([&] {
    action = [](const ex::Run& run) {
      const auto r = ex::cmd_eval(run);
      std::cout << "sigma_norm_ratio " << r.sigma_norm_ratio << "\nmode_fractions";
      for (double f : r.mode_fractions) std::cout << ' ' << f;
      std::cout << '\n';
    };
  });

  auto* repro = app.add_subcommand("repro", "toy reproductions");
  repro->require_subcommand(1);
  auto* fig2 = repro->add_subcommand("fig2", "score estimation error near and away from the modes");
  add_common(fig2);
  fig2->callback([&] {
    action = [](const ex::Run& run) {
      const auto r = ex::repro_fig2(run);
      std::cout << "near_mode_mse " << r.near_mse << "\nlow_density_mse " << r.low_mse << '\n';
    };
  });
  auto* fig3 = repro->add_subcommand("fig3", "mode weights of exact, Langevin and annealed Langevin sampling");
  add_common(fig3);
  fig3->callback([&] {
    action = [](const ex::Run& run) { print_fig3(ex::repro_fig3(run)); };
  });
  auto* manifold = repro->add_subcommand("manifold", "sliced score matching on manifold data with and without noise");
  add_common(manifold);
  manifold->callback([&] {
    action = [](const ex::Run& run) {
      for (const auto& r : ex::repro_manifold(run).runs)
        std::cout << r.name << " eval_spread " << ex::tail_spread(r.eval_loss) << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 2, e.what());
  }

  try {
    action(load(opt));
    return 0;
  } catch (const ncsn::Error& e) {
    return fail(e.kind(), exit_code(e), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", 4, e.what());
  } catch (const std::exception& e) {
    return fail("internal", 1, e.what());
  }
}
