#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ecgid/config.hpp"

using namespace ecgid;

TEST_CASE("defaults equal the best searched configuration") {
  const cli::ExperimentConfig cfg = cli::default_config();
  CHECK(cfg.embedder.arch == emb::Arch::Cdil);
  CHECK(cfg.embedder.embedding_dim == 256);
  CHECK(cfg.training.loss == emb::MetricLoss::Triplet);
  CHECK(cfg.training.fine_tune == disc::FineTune::EndToEnd);
  CHECK(cfg.embedder.preprocess.apply_norm);
  CHECK_FALSE(cfg.embedder.preprocess.apply_bwr);
  CHECK(cfg.embedder.preprocess.apply_hfnr);
  CHECK(cfg.discriminator.l1 == disc::FeatureMode::Full);
  CHECK(cfg.discriminator.l2 == disc::FeatureMode::Exclude);
  CHECK(cfg.discriminator.cos == disc::FeatureMode::Exclude);
  CHECK(cfg.discriminator.hidden_size == 16);
  CHECK(cfg.training.lr == 1e-3);
  CHECK(cfg.simulation.sim.n_initial == 10000);
  CHECK(cfg.simulation.sim.n_probe == 1000);
  CHECK(cfg.simulation.sim.mistake_rate == 0.02);
  CHECK(cfg.simulation.sim.strategy == idb::Strategy::WeightedDiscAvg);
}

TEST_CASE("unknown keys are rejected everywhere") {
  CHECK_THROWS_AS(cli::parse_config_text(R"({"embeder": {}})"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"embedder": {"widht": 3}})"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"training": {"learning_rate": 0.1}})"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"simulation": {"K": 10}})"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_config_text("not json"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"embedder": {"embedding_dim": 100}})"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"training": {"loss": "contrastive"}})"), cli::ConfigError);
}

TEST_CASE("config round trip and presets") {
  const cli::ExperimentConfig cfg = cli::parse_config_text(R"({
    "embedder": {"preset": "desk", "embedding_dim": 128},
    "training": {"loss": "circle", "batch_size": 16, "fine_tune": "freeze"},
    "simulation": {"mistake_rate": 0.05, "strategy": "disc_avg"}
  })");
  CHECK(cfg.embedder.cdil_width == 8);
  CHECK(cfg.embedder.embedding_dim == 128);
  CHECK(cfg.discriminator.embedding_dim == 128);  // follows the embedder
  CHECK(cfg.training.loss == emb::MetricLoss::Circle);
  CHECK(cfg.training.fine_tune == disc::FineTune::Freeze);
  CHECK(cfg.simulation.sim.strategy == idb::Strategy::DiscAvg);

  const cli::ExperimentConfig back = cli::parse_config_text(cli::config_to_json(cfg));
  CHECK(cli::config_to_json(back) == cli::config_to_json(cfg));
}

TEST_CASE("config reference lists every section") {
  const std::string ref = cli::config_reference();
  for (const char* key : {"embedder.architecture", "preprocess.normalize", "discriminator.l1",
                          "training.seed", "split.train", "simulation.n_initial", "paths.dataset"}) {
    CAPTURE(key);
    CHECK(ref.find(key) != std::string::npos);
  }
}
