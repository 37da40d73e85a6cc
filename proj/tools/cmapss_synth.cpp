#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rulattack/error.hpp"
#include "rulattack/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic run-to-failure dataset in the C-MAPSS text layout"};
  rulattack::SyntheticConfig cfg;
  std::string dir = ".";
  std::string id = "FD001";
  app.add_option("--out", dir, "target directory");
  app.add_option("--dataset", id, "dataset id used in file names");
  app.add_option("--seed", cfg.seed, "generator seed");
  app.add_option("--train-units", cfg.train_units);
  app.add_option("--test-units", cfg.test_units);
  CLI11_PARSE(app, argc, argv);

  try {
    rulattack::write_synthetic_cmapss(dir, id, cfg);
  } catch (const rulattack::Error& e) {
    std::cerr << e.name() << ": " << e.what() << '\n';
    return rulattack::exit_code(e.kind());
  }
  return 0;
}
