#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "ecgid/discriminator.hpp"
#include "ecgid/embedder.hpp"
#include "ecgid/evalharness.hpp"

namespace ecgid::cli {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error("config: " + what) {}
};

struct TrainingConfig {
  uint64_t seed = 1;
  int embed_steps = 1000;
  int pair_steps = 1000;
  int batch_size = 128;
  double lr = 0.001;
  emb::MetricLoss loss = emb::MetricLoss::Triplet;
  double triplet_margin = 1.0;
  double circle_gamma = 80.0;
  double circle_m = 0.4;
  disc::FineTune fine_tune = disc::FineTune::EndToEnd;
  int validate_every = 100;
  int patience = 10;
  int val_batch = 128;
};

struct SimulationSection {
  eval::SimulationConfig sim;               // defaults: N=10000, K=1000, p=0.02
  std::string threshold_source = "fixed";   // "fixed" | "dev_calibrated"
  double target_recall = 0.95;
  uint64_t dev_seed = 8;                    // seed of the calibration run
};

struct PathsConfig {
  std::string dataset;
  std::string embedder_checkpoint;
  std::string head_checkpoint;
  std::string database;
};

struct ExperimentConfig {
  emb::EmbedderConfig embedder;  // carries the preprocess section
  disc::DiscriminatorConfig discriminator;
  TrainingConfig training;
  eval::SplitSpec split;
  SimulationSection simulation;
  PathsConfig paths;
};

// Defaults equal the best searched configuration (CDIL, triplet, D=256,
// norm+HFNR, end-to-end fine-tune; head l1=full/hidden 16).
ExperimentConfig default_config();

// Strict parse: unknown keys anywhere are an error. The discriminator's
// embedding_dim always follows the embedder's.
ExperimentConfig parse_config_text(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

std::string config_to_json(const ExperimentConfig& cfg);

// Key-by-key listing with defaults, rendered into --help.
std::string config_reference();

}  // namespace ecgid::cli
