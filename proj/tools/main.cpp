#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ecgid/checkpoint.hpp"
#include "ecgid/config.hpp"
#include "ecgid/discriminator.hpp"
#include "ecgid/ecgstore.hpp"
#include "ecgid/embedder.hpp"
#include "ecgid/evalharness.hpp"
#include "ecgid/identity.hpp"
#include "ecgid/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ecgid;

// Models run in 32-bit floats; the test suites exercise the 64-bit
// instantiations where tolerances demand it.
using Real = float;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
};

cli::ExperimentConfig load_config(const CommonArgs& args) {
  cli::ExperimentConfig cfg =
      args.config_path.empty() ? cli::default_config() : cli::load_config_file(args.config_path);
  return cfg;
}

std::string resolve(const std::string& configured, const fs::path& fallback) {
  return configured.empty() ? fallback.string() : configured;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::unique_ptr<emb::Embedder<Real>> build_embedder(const cli::ExperimentConfig& cfg,
                                                    const std::string& checkpoint) {
  auto model = std::make_unique<emb::Embedder<Real>>(cfg.embedder);
  if (!checkpoint.empty()) {
    model->load_tensors(tn::read_checkpoint<Real>(tn::read_file(checkpoint)));
    std::cout << "loaded embedder weights from " << checkpoint << "\n";
  }
  return model;
}

std::unique_ptr<disc::DiscriminatorHead<Real>> build_head(const cli::ExperimentConfig& cfg,
                                                          const std::string& checkpoint) {
  auto head = std::make_unique<disc::DiscriminatorHead<Real>>(cfg.discriminator);
  if (!checkpoint.empty()) {
    head->load_tensors(tn::read_checkpoint<Real>(tn::read_file(checkpoint)));
    std::cout << "loaded head weights from " << checkpoint << "\n";
  }
  return head;
}

// Eval commands prefer the fine-tuned embedder when one exists next to the
// phase-one checkpoint.
std::string resolve_embedder_ckpt(const cli::ExperimentConfig& cfg, const fs::path& out) {
  if (!cfg.paths.embedder_checkpoint.empty()) return cfg.paths.embedder_checkpoint;
  const fs::path tuned = out / "embedder_tuned.ckpt";
  if (fs::exists(tuned)) return tuned.string();
  return (out / "embedder.ckpt").string();
}

eval::EmbedFn make_embed_fn(const emb::Embedder<Real>& model) {
  return [&model](const store::EcgRecord& rec) { return model.embed(store::to_model_input(rec)); };
}

std::string curve_csv(const emb::MetricTrainResult& r) {
  std::ostringstream os;
  os << "phase,step,loss\n";
  for (const auto& p : r.train_loss) os << "train," << p.step << ',' << p.value << '\n';
  for (const auto& p : r.val_loss) os << "val," << p.step << ',' << p.value << '\n';
  return os.str();
}

std::string curve_csv(const disc::SiameseTrainResult& r) {
  std::ostringstream os;
  os << "phase,step,loss\n";
  for (const auto& p : r.train_loss) os << "train," << p.step << ',' << p.value << '\n';
  for (const auto& p : r.val_loss) os << "val," << p.step << ',' << p.value << '\n';
  return os.str();
}

int cmd_synth(const CommonArgs& common, int n_patients, int min_recs, int max_recs, int64_t samples, int rate) {
  cli::ExperimentConfig cfg = load_config(common);
  (void)cfg;
  const uint64_t seed = common.seed.value_or(42);
  const store::DatasetContainer c = synth::generate_dataset(n_patients, min_recs, max_recs, seed, samples, rate);
  fs::create_directories(common.out_dir);
  const fs::path path = fs::path(common.out_dir) / "dataset.ecgg";
  store::save_container(path.string(), c);
  write_text((fs::path(common.out_dir) / "dataset.manifest").string(), store::write_manifest(c));
  std::cout << "wrote " << c.records.size() << " recordings for " << n_patients << " patients to " << path
            << "\n";
  return kExitOk;
}

int cmd_train_embed(const CommonArgs& common) {
  cli::ExperimentConfig cfg = load_config(common);
  if (common.seed) cfg.training.seed = *common.seed;
  const fs::path out(common.out_dir);
  fs::create_directories(out);
  const store::DatasetContainer data =
      store::load_container(resolve(cfg.paths.dataset, out / "dataset.ecgg"));
  const eval::DatasetView train_view(data, cfg.split, eval::Split::Train);
  const eval::DatasetView dev_view(data, cfg.split, eval::Split::Dev);
  eval::TripletSampler train_sampler(train_view, cfg.training.seed);
  eval::TripletSampler val_sampler(dev_view, cfg.training.seed + 1);

  emb::Embedder<Real> model(cfg.embedder);
  emb::MetricTrainOptions opts;
  opts.steps = cfg.training.embed_steps;
  opts.batch_size = cfg.training.batch_size;
  opts.loss = cfg.training.loss;
  opts.triplet_margin = cfg.training.triplet_margin;
  opts.circle_gamma = cfg.training.circle_gamma;
  opts.circle_m = cfg.training.circle_m;
  opts.lr = cfg.training.lr;
  opts.validate_every = cfg.training.validate_every;
  opts.patience = cfg.training.patience;
  opts.val_batch = cfg.training.val_batch;

  const emb::MetricTrainResult result = emb::train_metric<Real>(model, train_sampler, val_sampler, opts);
  tn::write_file((out / "embedder.ckpt").string(), tn::write_checkpoint<Real>(model.named_tensors()));
  write_text((out / "embed_loss.csv").string(), curve_csv(result));
  std::cout << "phase one: " << result.steps_run << " steps, best validation loss " << result.best_val
            << " at step " << result.best_step << "\n";
  std::cout << "wrote " << (out / "embedder.ckpt") << "\n";
  return kExitOk;
}

int cmd_train_disc(const CommonArgs& common) {
  cli::ExperimentConfig cfg = load_config(common);
  if (common.seed) cfg.training.seed = *common.seed;
  const fs::path out(common.out_dir);
  fs::create_directories(out);
  const store::DatasetContainer data =
      store::load_container(resolve(cfg.paths.dataset, out / "dataset.ecgg"));
  const eval::DatasetView train_view(data, cfg.split, eval::Split::Train);
  const eval::DatasetView dev_view(data, cfg.split, eval::Split::Dev);
  eval::PairSampler train_sampler(train_view, cfg.training.seed + 2);
  eval::PairSampler val_sampler(dev_view, cfg.training.seed + 3);

  auto model = build_embedder(cfg, resolve(cfg.paths.embedder_checkpoint, out / "embedder.ckpt"));
  disc::DiscriminatorHead<Real> head(cfg.discriminator);

  disc::SiameseTrainOptions opts;
  opts.steps = cfg.training.pair_steps;
  opts.batch_size = cfg.training.batch_size;
  opts.fine_tune = cfg.training.fine_tune;
  opts.lr = cfg.training.lr;
  opts.validate_every = cfg.training.validate_every;
  opts.patience = cfg.training.patience;
  opts.val_batch = cfg.training.val_batch;

  const disc::SiameseTrainResult result = disc::train_siamese<Real>(*model, head, train_sampler, val_sampler, opts);
  tn::write_file((out / "head.ckpt").string(), tn::write_checkpoint<Real>(head.named_tensors()));
  tn::write_file((out / "embedder_tuned.ckpt").string(), tn::write_checkpoint<Real>(model->named_tensors()));
  write_text((out / "disc_loss.csv").string(), curve_csv(result));
  std::cout << "phase two: " << result.steps_run << " steps, best validation loss " << result.best_val
            << " at step " << result.best_step << ", pair accuracy " << result.val_accuracy << "\n";
  std::cout << "wrote " << (out / "head.ckpt") << " and " << (out / "embedder_tuned.ckpt") << "\n";
  return kExitOk;
}

int cmd_ingest(const CommonArgs& common, bool dump_text) {
  cli::ExperimentConfig cfg = load_config(common);
  const fs::path out(common.out_dir);
  fs::create_directories(out);
  const store::DatasetContainer data =
      store::load_container(resolve(cfg.paths.dataset, out / "dataset.ecgg"));
  auto model = build_embedder(cfg, resolve_embedder_ckpt(cfg, out));
  idb::VectorDatabase db(cfg.embedder.embedding_dim);
  for (const store::EcgRecord& rec : data.records) {
    db.insert(rec.patient_id, model->embed(store::to_model_input(rec)));
  }
  const std::string db_path = resolve(cfg.paths.database, out / "vectors.db");
  db.save(db_path);
  std::cout << "ingested " << db.vector_count() << " vectors for " << db.patient_count() << " patients into "
            << db_path << "\n";
  if (dump_text) {
    write_text((out / "vectors.txt").string(), db.dump_text());
    std::cout << "wrote " << (out / "vectors.txt") << "\n";
  }
  return kExitOk;
}

int cmd_gallery_probe(const CommonArgs& common, int sample_size, const std::string& split) {
  cli::ExperimentConfig cfg = load_config(common);
  const fs::path out(common.out_dir);
  fs::create_directories(out);
  const store::DatasetContainer data =
      store::load_container(resolve(cfg.paths.dataset, out / "dataset.ecgg"));
  const eval::DatasetView view(data, cfg.split, eval::split_from_name(split));
  auto model = build_embedder(cfg, resolve_embedder_ckpt(cfg, out));
  auto head = build_head(cfg, resolve(cfg.paths.head_checkpoint, out / "head.ckpt"));
  const uint64_t seed = common.seed.value_or(cfg.simulation.sim.seed);
  const eval::GalleryProbeResult r = eval::gallery_probe(view, make_embed_fn(*model), *head, sample_size, seed);
  const json j{{"accuracy", r.accuracy}, {"sample_size", r.sample_size}, {"scorer_calls", r.scorer_calls},
               {"split", split},         {"seed", seed}};
  write_text((out / "gallery_probe.json").string(), j.dump(2) + "\n");
  std::cout << "gallery-probe accuracy " << r.accuracy << " over " << r.sample_size << " patients ("
            << r.scorer_calls << " discriminator calls)\n";
  return kExitOk;
}

int cmd_simulate(const CommonArgs& common, std::optional<double> mistake_rate, std::optional<std::string> strategy,
                 std::optional<double> threshold, std::optional<int> n_initial, std::optional<int> n_probe,
                 const std::string& split) {
  cli::ExperimentConfig cfg = load_config(common);
  eval::SimulationConfig sim = cfg.simulation.sim;
  if (common.seed) sim.seed = *common.seed;
  if (mistake_rate) sim.mistake_rate = *mistake_rate;
  if (strategy) sim.strategy = idb::strategy_from_name(*strategy);
  if (threshold) {
    sim.threshold = *threshold;
    cfg.simulation.threshold_source = "fixed";
  }
  if (n_initial) sim.n_initial = *n_initial;
  if (n_probe) sim.n_probe = *n_probe;

  const fs::path out(common.out_dir);
  fs::create_directories(out);
  const store::DatasetContainer data =
      store::load_container(resolve(cfg.paths.dataset, out / "dataset.ecgg"));
  const eval::DatasetView view(data, cfg.split, eval::split_from_name(split));
  auto model = build_embedder(cfg, resolve_embedder_ckpt(cfg, out));
  auto head = build_head(cfg, resolve(cfg.paths.head_checkpoint, out / "head.ckpt"));
  const eval::EmbedFn embed = make_embed_fn(*model);

  if (cfg.simulation.threshold_source == "dev_calibrated") {
    eval::SimulationConfig dev = sim;
    dev.seed = cfg.simulation.dev_seed;
    dev.compute_corrections = false;
    const eval::SimulationReport dev_report = eval::simulate_overseer(view, dev, embed, *head);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : dev_report.steps) {
      scores.push_back(s.likelihood);
      labels.push_back(s.mistake ? 1 : 0);
    }
    sim.threshold = eval::calibrate_threshold(scores, labels, cfg.simulation.target_recall);
    std::cout << "calibrated threshold " << sim.threshold << " at recall " << cfg.simulation.target_recall
              << " on the dev run\n";
  }

  const eval::SimulationReport report = eval::simulate_overseer(view, sim, embed, *head);
  write_text((out / "simulation.jsonl").string(), eval::report_jsonl(report));
  write_text((out / "simulation_summary.json").string(), eval::report_summary_json(report));
  std::cout << eval::report_text(report);
  return kExitOk;
}

int cmd_bench(const CommonArgs& common, int repeats, int cluster_size) {
  cli::ExperimentConfig cfg = load_config(common);
  const fs::path out(common.out_dir);
  fs::create_directories(out);
  emb::Embedder<Real> model(cfg.embedder);  // untrained weights; timing only
  disc::DiscriminatorHead<Real> head(cfg.discriminator);

  const synth::SyntheticPatientParams params = synth::generate_patient(common.seed.value_or(1));
  idb::VectorDatabase db(cfg.embedder.embedding_dim);
  for (int i = 0; i < cluster_size; ++i) {
    store::EcgRecord rec = synth::generate_recording(params, static_cast<uint64_t>(i));
    rec.patient_id = 1;
    db.insert(1, model.embed(store::to_model_input(rec)));
  }
  store::EcgRecord probe = synth::generate_recording(params, 999);
  probe.patient_id = 1;
  const store::ModelInput probe_input = store::to_model_input(probe);

  std::vector<double> ms(static_cast<size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const EcgVector v = model.embed(probe_input);
    volatile double sink = db.likelihood(v, 1, cfg.simulation.sim.strategy, head);
    (void)sink;
    const auto t1 = std::chrono::steady_clock::now();
    ms[static_cast<size_t>(i)] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / repeats;
  const double median = ms[static_cast<size_t>(repeats) / 2];
  const double p99 = ms[static_cast<size_t>(std::min<double>(repeats - 1, std::ceil(repeats * 0.99) - 1))];
  const json j{{"repeats", repeats}, {"cluster_size", cluster_size}, {"mean_ms", mean},
               {"median_ms", median}, {"p99_ms", p99}};
  write_text((out / "bench.json").string(), j.dump(2) + "\n");
  std::printf("overseer check: mean %.3f ms, median %.3f ms, p99 %.3f ms over %d repeats\n", mean, median, p99,
              repeats);
  return kExitOk;
}

int cmd_report(const CommonArgs& common, const std::string& report_path) {
  (void)common;
  std::ifstream f(report_path);
  if (!f) throw std::runtime_error("cannot open " + report_path);
  std::stringstream ss;
  ss << f.rdbuf();
  const eval::SimulationReport report = eval::parse_report_jsonl(ss.str());
  std::cout << eval::report_text(report);
  std::cout << eval::report_summary_json(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG identity verification: synthetic data, two-phase training, gallery-probe and "
               "overseer-simulation evaluation"};
  app.require_subcommand(1);
  app.footer(cli::config_reference());

  CommonArgs common;
  app.add_option("--config", common.config_path, "JSON experiment config");
  app.add_option("--out", common.out_dir, "output directory (default: out)");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the command-relevant seed");

  int n_patients = 200, min_recs = 2, max_recs = 6, rate = 500;
  int64_t samples = 4096;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic ECGG dataset");
  synth_cmd->add_option("--n-patients", n_patients, "number of synthetic patients (default 200)");
  synth_cmd->add_option("--min-recordings", min_recs, "min recordings per patient (default 2)");
  synth_cmd->add_option("--max-recordings", max_recs, "max recordings per patient (default 6)");
  synth_cmd->add_option("--samples", samples, "samples per recording (default 4096)");
  synth_cmd->add_option("--rate", rate, "sample rate in Hz (default 500)");

  auto* train_embed_cmd = app.add_subcommand("train-embed", "phase one: metric-learn the embedding model");
  auto* train_disc_cmd = app.add_subcommand("train-disc", "phase two: train the discriminator head on pairs");

  bool dump_text = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "embed a dataset into a patient vector database");
  ingest_cmd->add_flag("--dump-text", dump_text, "also write vectors as line-delimited text");

  int sample_size = 100;
  std::string gp_split = "all";
  auto* gallery_cmd = app.add_subcommand("gallery-probe", "gallery-probe matching accuracy");
  gallery_cmd->add_option("--sample-size", sample_size, "patients in the gallery (default 100)");
  gallery_cmd->add_option("--split", gp_split, "train|dev|test|all (default all)");

  std::optional<double> mistake_rate, threshold;
  std::optional<std::string> strategy;
  std::optional<int> n_initial, n_probe;
  std::string sim_split = "all";
  auto* simulate_cmd = app.add_subcommand("simulate", "run the overseer simulation");
  simulate_cmd->add_option("--mistake-rate", mistake_rate, "staff mistake probability");
  simulate_cmd->add_option("--strategy", strategy, "likelihood strategy");
  simulate_cmd->add_option("--threshold", threshold, "fixed flagging threshold");
  simulate_cmd->add_option("--n-patients", n_initial, "patients to initialize the database with");
  simulate_cmd->add_option("--n-probe", n_probe, "recordings to stream");
  simulate_cmd->add_option("--split", sim_split, "train|dev|test|all (default all)");

  int repeats = 50, cluster_size = 5;
  auto* bench_cmd = app.add_subcommand("bench", "time a single overseer check on CPU");
  bench_cmd->add_option("--repeats", repeats, "timing repetitions (default 50)");
  bench_cmd->add_option("--cluster-size", cluster_size, "vectors in the scored cluster (default 5)");

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "render a saved simulation report");
  report_cmd->add_option("--report", report_path, "simulation.jsonl to render")->required();

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) common.seed = seed_value;

  try {
    if (synth_cmd->parsed()) return cmd_synth(common, n_patients, min_recs, max_recs, samples, rate);
    if (train_embed_cmd->parsed()) return cmd_train_embed(common);
    if (train_disc_cmd->parsed()) return cmd_train_disc(common);
    if (ingest_cmd->parsed()) return cmd_ingest(common, dump_text);
    if (gallery_cmd->parsed()) return cmd_gallery_probe(common, sample_size, gp_split);
    if (simulate_cmd->parsed()) {
      return cmd_simulate(common, mistake_rate, strategy, threshold, n_initial, n_probe, sim_split);
    }
    if (bench_cmd->parsed()) return cmd_bench(common, repeats, cluster_size);
    if (report_cmd->parsed()) return cmd_report(common, report_path);
  } catch (const cli::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const store::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const eval::InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const idb::DbError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const tn::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
