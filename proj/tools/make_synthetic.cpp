// Generates the synthetic square-detection dataset (tinted backgrounds,
// tint as the protected attribute) used by the examples in the README and
// by the test suites.

#include <iostream>

#include "CLI11.hpp"
#include "fairgrain/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic shape-detection dataset generator"};
  std::string out_dir = "data/synthetic";
  fairgrain::SyntheticConfig cfg;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--train-count", cfg.train_count, "training images");
  app.add_option("--val-count", cfg.val_count, "validation images");
  app.add_option("--test-count", cfg.test_count, "test images");
  app.add_option("--resolution", cfg.resolution, "image side length");
  app.add_option("--seed", cfg.seed, "rng seed");
  app.add_option("--warm-fraction-train", cfg.warm_fraction_train,
                 "fraction of warm-tint images in the training split");
  CLI11_PARSE(app, argc, argv);

  try {
    fairgrain::generate_synthetic_dataset(out_dir, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cout << "wrote dataset under " << out_dir << "\n";
  return 0;
}
