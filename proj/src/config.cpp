#include "ecgid/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ecgid::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

void parse_embedder(const json& j, emb::EmbedderConfig& cfg) {
  reject_unknown(j,
                 {"architecture", "preset", "embedding_dim", "cdil_width", "cdil_out_width", "resnet_channels",
                  "resnet_hidden1", "resnet_hidden2", "init_seed"},
                 "embedder");
  std::string preset;
  read(j, "preset", preset);
  std::string arch = cfg.arch == emb::Arch::Cdil ? "cdil" : "resnet1d";
  read(j, "architecture", arch);
  if (arch == "cdil") cfg.arch = emb::Arch::Cdil;
  else if (arch == "resnet1d") cfg.arch = emb::Arch::Resnet1d;
  else throw ConfigError("architecture must be \"cdil\" or \"resnet1d\"");
  if (!preset.empty()) {
    const pp::PreprocessConfig keep_pp = cfg.preprocess;
    if (preset == "paper") cfg = cfg.arch == emb::Arch::Cdil ? emb::cdil_paper() : emb::resnet_paper();
    else if (preset == "desk") cfg = cfg.arch == emb::Arch::Cdil ? emb::cdil_desk() : emb::resnet_desk();
    else throw ConfigError("preset must be \"paper\" or \"desk\"");
    cfg.preprocess = keep_pp;
  }
  read(j, "embedding_dim", cfg.embedding_dim);
  read(j, "cdil_width", cfg.cdil_width);
  read(j, "cdil_out_width", cfg.cdil_out_width);
  if (j.contains("resnet_channels")) {
    const auto v = j.at("resnet_channels").get<std::vector<int>>();
    if (v.size() != 4) throw ConfigError("resnet_channels must have 4 entries");
    std::copy(v.begin(), v.end(), cfg.resnet_channels.begin());
  }
  read(j, "resnet_hidden1", cfg.resnet_hidden1);
  read(j, "resnet_hidden2", cfg.resnet_hidden2);
  read(j, "init_seed", cfg.init_seed);
}

void parse_preprocess(const json& j, pp::PreprocessConfig& cfg) {
  reject_unknown(j,
                 {"normalize", "baseline_wander_removal", "hf_noise_removal", "wavelet_levels",
                  "hfnr_detail_levels"},
                 "preprocess");
  read(j, "normalize", cfg.apply_norm);
  read(j, "baseline_wander_removal", cfg.apply_bwr);
  read(j, "hf_noise_removal", cfg.apply_hfnr);
  read(j, "wavelet_levels", cfg.wavelet_levels);
  read(j, "hfnr_detail_levels", cfg.hfnr_detail_levels);
  if (cfg.wavelet_levels < 1) throw ConfigError("wavelet_levels must be >= 1");
  if (cfg.hfnr_detail_levels < 1 || cfg.hfnr_detail_levels > cfg.wavelet_levels) {
    throw ConfigError("hfnr_detail_levels must be in [1, wavelet_levels]");
  }
}

void parse_discriminator(const json& j, disc::DiscriminatorConfig& cfg) {
  reject_unknown(j, {"l1", "l2", "cos", "hidden_size", "init_seed"}, "discriminator");
  auto mode = [&](const char* key, disc::FeatureMode& out) {
    std::string s;
    read(j, key, s);
    if (!s.empty()) out = disc::feature_mode_from_name(s);
  };
  mode("l1", cfg.l1);
  mode("l2", cfg.l2);
  mode("cos", cfg.cos);
  read(j, "hidden_size", cfg.hidden_size);
  read(j, "init_seed", cfg.init_seed);
}

void parse_training(const json& j, TrainingConfig& cfg) {
  reject_unknown(j,
                 {"seed", "embed_steps", "pair_steps", "batch_size", "lr", "loss", "triplet_margin",
                  "circle_gamma", "circle_m", "fine_tune", "validate_every", "patience", "val_batch"},
                 "training");
  read(j, "seed", cfg.seed);
  read(j, "embed_steps", cfg.embed_steps);
  read(j, "pair_steps", cfg.pair_steps);
  read(j, "batch_size", cfg.batch_size);
  read(j, "lr", cfg.lr);
  std::string loss;
  read(j, "loss", loss);
  if (!loss.empty()) {
    if (loss == "triplet") cfg.loss = emb::MetricLoss::Triplet;
    else if (loss == "circle") cfg.loss = emb::MetricLoss::Circle;
    else throw ConfigError("loss must be \"triplet\" or \"circle\"");
  }
  read(j, "triplet_margin", cfg.triplet_margin);
  read(j, "circle_gamma", cfg.circle_gamma);
  read(j, "circle_m", cfg.circle_m);
  std::string ft;
  read(j, "fine_tune", ft);
  if (!ft.empty()) {
    if (ft == "freeze") cfg.fine_tune = disc::FineTune::Freeze;
    else if (ft == "end_to_end") cfg.fine_tune = disc::FineTune::EndToEnd;
    else throw ConfigError("fine_tune must be \"freeze\" or \"end_to_end\"");
  }
  read(j, "validate_every", cfg.validate_every);
  read(j, "patience", cfg.patience);
  read(j, "val_batch", cfg.val_batch);
}

void parse_split(const json& j, eval::SplitSpec& cfg) {
  reject_unknown(j, {"train", "dev", "patient_disjoint"}, "split");
  read(j, "train", cfg.train);
  read(j, "dev", cfg.dev);
  read(j, "patient_disjoint", cfg.patient_disjoint);
}

void parse_simulation(const json& j, SimulationSection& cfg) {
  reject_unknown(j,
                 {"n_initial", "n_probe", "mistake_rate", "strategy", "threshold", "threshold_source",
                  "target_recall", "seed", "dev_seed", "insert_flagged", "compute_corrections"},
                 "simulation");
  read(j, "n_initial", cfg.sim.n_initial);
  read(j, "n_probe", cfg.sim.n_probe);
  read(j, "mistake_rate", cfg.sim.mistake_rate);
  std::string strategy;
  read(j, "strategy", strategy);
  if (!strategy.empty()) cfg.sim.strategy = idb::strategy_from_name(strategy);
  read(j, "threshold", cfg.sim.threshold);
  read(j, "threshold_source", cfg.threshold_source);
  if (cfg.threshold_source != "fixed" && cfg.threshold_source != "dev_calibrated") {
    throw ConfigError("threshold_source must be \"fixed\" or \"dev_calibrated\"");
  }
  read(j, "target_recall", cfg.target_recall);
  read(j, "seed", cfg.sim.seed);
  read(j, "dev_seed", cfg.dev_seed);
  read(j, "insert_flagged", cfg.sim.insert_flagged);
  read(j, "compute_corrections", cfg.sim.compute_corrections);
}

void parse_paths(const json& j, PathsConfig& cfg) {
  reject_unknown(j, {"dataset", "embedder_checkpoint", "head_checkpoint", "database"}, "paths");
  read(j, "dataset", cfg.dataset);
  read(j, "embedder_checkpoint", cfg.embedder_checkpoint);
  read(j, "head_checkpoint", cfg.head_checkpoint);
  read(j, "database", cfg.database);
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.simulation.sim.seed = 7;
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("top level must be an object");
  reject_unknown(j, {"embedder", "preprocess", "discriminator", "training", "split", "simulation", "paths"},
                 "top level");
  ExperimentConfig cfg = default_config();
  if (j.contains("embedder")) parse_embedder(j.at("embedder"), cfg.embedder);
  if (j.contains("preprocess")) parse_preprocess(j.at("preprocess"), cfg.embedder.preprocess);
  if (j.contains("discriminator")) parse_discriminator(j.at("discriminator"), cfg.discriminator);
  if (j.contains("training")) parse_training(j.at("training"), cfg.training);
  if (j.contains("split")) parse_split(j.at("split"), cfg.split);
  if (j.contains("simulation")) parse_simulation(j.at("simulation"), cfg.simulation);
  if (j.contains("paths")) parse_paths(j.at("paths"), cfg.paths);
  cfg.discriminator.embedding_dim = cfg.embedder.embedding_dim;
  try {
    emb::validate(cfg.embedder);
    disc::validate(cfg.discriminator);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  const auto& e = cfg.embedder;
  const auto& p = e.preprocess;
  const auto& d = cfg.discriminator;
  const auto& t = cfg.training;
  const auto& s = cfg.simulation;
  json j{
      {"embedder",
       {{"architecture", e.arch == emb::Arch::Cdil ? "cdil" : "resnet1d"},
        {"embedding_dim", e.embedding_dim},
        {"cdil_width", e.cdil_width},
        {"cdil_out_width", e.cdil_out_width},
        {"resnet_channels", std::vector<int>(e.resnet_channels.begin(), e.resnet_channels.end())},
        {"resnet_hidden1", e.resnet_hidden1},
        {"resnet_hidden2", e.resnet_hidden2},
        {"init_seed", e.init_seed}}},
      {"preprocess",
       {{"normalize", p.apply_norm},
        {"baseline_wander_removal", p.apply_bwr},
        {"hf_noise_removal", p.apply_hfnr},
        {"wavelet_levels", p.wavelet_levels},
        {"hfnr_detail_levels", p.hfnr_detail_levels}}},
      {"discriminator",
       {{"l1", disc::feature_mode_name(d.l1)},
        {"l2", disc::feature_mode_name(d.l2)},
        {"cos", disc::feature_mode_name(d.cos)},
        {"hidden_size", d.hidden_size},
        {"init_seed", d.init_seed}}},
      {"training",
       {{"seed", t.seed},
        {"embed_steps", t.embed_steps},
        {"pair_steps", t.pair_steps},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"loss", t.loss == emb::MetricLoss::Triplet ? "triplet" : "circle"},
        {"triplet_margin", t.triplet_margin},
        {"circle_gamma", t.circle_gamma},
        {"circle_m", t.circle_m},
        {"fine_tune", t.fine_tune == disc::FineTune::Freeze ? "freeze" : "end_to_end"},
        {"validate_every", t.validate_every},
        {"patience", t.patience},
        {"val_batch", t.val_batch}}},
      {"split",
       {{"train", cfg.split.train}, {"dev", cfg.split.dev}, {"patient_disjoint", cfg.split.patient_disjoint}}},
      {"simulation",
       {{"n_initial", s.sim.n_initial},
        {"n_probe", s.sim.n_probe},
        {"mistake_rate", s.sim.mistake_rate},
        {"strategy", idb::strategy_name(s.sim.strategy)},
        {"threshold", s.sim.threshold},
        {"threshold_source", s.threshold_source},
        {"target_recall", s.target_recall},
        {"seed", s.sim.seed},
        {"dev_seed", s.dev_seed},
        {"insert_flagged", s.sim.insert_flagged},
        {"compute_corrections", s.sim.compute_corrections}}},
      {"paths",
       {{"dataset", cfg.paths.dataset},
        {"embedder_checkpoint", cfg.paths.embedder_checkpoint},
        {"head_checkpoint", cfg.paths.head_checkpoint},
        {"database", cfg.paths.database}}}};
  return j.dump(2) + "\n";
}

std::string config_reference() {
  const ExperimentConfig d = default_config();
  std::ostringstream os;
  os << "Config file keys (JSON) and defaults:\n";
  os << "  embedder.architecture        cdil | resnet1d            (cdil)\n";
  os << "  embedder.preset              paper | desk               (paper widths)\n";
  os << "  embedder.embedding_dim       128 | 256 | 384 | 512      (" << d.embedder.embedding_dim << ")\n";
  os << "  embedder.cdil_width          channels of dilated blocks (" << d.embedder.cdil_width << ")\n";
  os << "  embedder.cdil_out_width      channels before pooling    (" << d.embedder.cdil_out_width << ")\n";
  os << "  embedder.resnet_channels     4 stage widths             (128,196,256,320)\n";
  os << "  embedder.resnet_hidden1/2    perceptron widths          (" << d.embedder.resnet_hidden1 << ", "
     << d.embedder.resnet_hidden2 << ")\n";
  os << "  embedder.init_seed                                      (" << d.embedder.init_seed << ")\n";
  os << "  preprocess.normalize         z-score per lead           (true)\n";
  os << "  preprocess.baseline_wander_removal                      (false)\n";
  os << "  preprocess.hf_noise_removal                             (true)\n";
  os << "  preprocess.wavelet_levels    BWR depth                  (" << d.embedder.preprocess.wavelet_levels
     << ")\n";
  os << "  preprocess.hfnr_detail_levels                           (" << d.embedder.preprocess.hfnr_detail_levels
     << ")\n";
  os << "  discriminator.l1/l2/cos      exclude | merge | full     (full, exclude, exclude)\n";
  os << "  discriminator.hidden_size    0 disables the hidden layer(" << d.discriminator.hidden_size << ")\n";
  os << "  discriminator.init_seed                                 (" << d.discriminator.init_seed << ")\n";
  os << "  training.seed                sampler seed               (" << d.training.seed << ")\n";
  os << "  training.embed_steps         phase-one steps            (" << d.training.embed_steps << ")\n";
  os << "  training.pair_steps          phase-two steps            (" << d.training.pair_steps << ")\n";
  os << "  training.batch_size                                     (" << d.training.batch_size << ")\n";
  os << "  training.lr                  Adam learning rate         (" << d.training.lr << ")\n";
  os << "  training.loss                triplet | circle           (triplet)\n";
  os << "  training.triplet_margin                                 (" << d.training.triplet_margin << ")\n";
  os << "  training.circle_gamma / circle_m                        (" << d.training.circle_gamma << ", "
     << d.training.circle_m << ")\n";
  os << "  training.fine_tune           freeze | end_to_end        (end_to_end)\n";
  os << "  training.validate_every / patience / val_batch          (" << d.training.validate_every << ", "
     << d.training.patience << ", " << d.training.val_batch << ")\n";
  os << "  split.train / split.dev      record-sequence fractions  (" << d.split.train << ", " << d.split.dev
     << ")\n";
  os << "  split.patient_disjoint       whole-patient splits       (false)\n";
  os << "  simulation.n_initial         database patients          (" << d.simulation.sim.n_initial << ")\n";
  os << "  simulation.n_probe           streamed recordings        (" << d.simulation.sim.n_probe << ")\n";
  os << "  simulation.mistake_rate                                 (" << d.simulation.sim.mistake_rate << ")\n";
  os << "  simulation.strategy          vec_avg | disc_avg | weighted_disc_avg | weighted_consistency ("
     << idb::strategy_name(d.simulation.sim.strategy) << ")\n";
  os << "  simulation.threshold         flag when likelihood below (" << d.simulation.sim.threshold << ")\n";
  os << "  simulation.threshold_source  fixed | dev_calibrated     (" << d.simulation.threshold_source << ")\n";
  os << "  simulation.target_recall     for dev calibration        (" << d.simulation.target_recall << ")\n";
  os << "  simulation.seed / dev_seed                              (" << d.simulation.sim.seed << ", "
     << d.simulation.dev_seed << ")\n";
  os << "  simulation.insert_flagged    false = flag-and-drop      (true)\n";
  os << "  simulation.compute_corrections                          (true)\n";
  os << "  paths.dataset / embedder_checkpoint / head_checkpoint / database\n";
  return os.str();
}

}  // namespace ecgid::cli
