#include "hfz/cli.hpp"

#include "hfz/data.hpp"
#include "hfz/errors.hpp"
#include "hfz/eval.hpp"
#include "hfz/fusion.hpp"
#include "hfz/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <ostream>

namespace hfz {
namespace {

namespace fs = std::filesystem;

/// Invalid configuration detected after parsing; maps to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

struct ArchitectureFlags {
  Index filters = 8;
  Index kernel = 3;
  Index hidden1 = 32;
  Index hidden2 = 32;
  Index fusion_width = kFusionWidth;

  void attach(CLI::App& cmd) {
    cmd.add_option("--filters", filters, "ConvLSTM filter count")->capture_default_str();
    cmd.add_option("--kernel", kernel, "ConvLSTM kernel size (odd)")->capture_default_str();
    cmd.add_option("--hidden1", hidden1, "first LSTM hidden size")->capture_default_str();
    cmd.add_option("--hidden2", hidden2, "second LSTM hidden size")->capture_default_str();
    cmd.add_option("--fusion-width", fusion_width, "fusion head layer width")->capture_default_str();
  }

  void validate() const {
    require(filters > 0 && hidden1 > 0 && hidden2 > 0 && fusion_width > 0,
            "layer sizes must be positive");
    require(kernel > 0 && kernel % 2 == 1, "--kernel must be a positive odd number");
  }

  TactileModelSpec tactile(const Dataset& ds) const {
    return {ds.tactile_height, ds.tactile_width, filters, kernel, kernel, ds.classes()};
  }
  KinestheticModelSpec kinesthetic(const Dataset& ds) const {
    return {hidden1, hidden2, ds.classes()};
  }
};

struct CountFlags {
  SplitCounts counts;

  void attach(CLI::App& cmd) {
    cmd.add_option("--train-count", counts.train, "training grasps per class (incl. validation)")
        ->capture_default_str();
    cmd.add_option("--fusion-count", counts.fusion, "fusion-head grasps per class (neural)")
        ->capture_default_str();
    cmd.add_option("--test-count", counts.test, "test grasps per class")->capture_default_str();
    cmd.add_option("--val-fraction", counts.val_fraction, "validation share of base training")
        ->capture_default_str();
  }

  void validate() const {
    require(counts.train > 0 && counts.test > 0 && counts.fusion > 0 &&
                counts.fusion < counts.train && counts.val_fraction >= 0.0 &&
                counts.val_fraction < 1.0,
            "split counts must be positive, --fusion-count below --train-count and "
            "--val-fraction in [0, 1)");
  }
};

struct ScheduleFlags {
  std::optional<int> epochs;
  std::optional<double> lr;

  void attach(CLI::App& cmd, const std::string& prefix, const std::string& what) {
    cmd.add_option("--" + prefix + "epochs", epochs, what + " epochs (default: preset)");
    cmd.add_option("--" + prefix + "lr", lr, what + " learning rate (default: preset)");
  }

  TrainSchedule apply(TrainSchedule s, Index batch) const {
    if (epochs) s.epochs = *epochs;
    if (lr) s.learning_rate = *lr;
    s.batch_size = batch;
    require(s.epochs >= 0, "epochs must be non-negative");
    require(s.learning_rate >= 0.0 && std::isfinite(s.learning_rate),
            "learning rate must be finite and non-negative");
    require(s.batch_size >= 1, "--batch-size must be at least 1");
    return s;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

Posterior read_posterior(const fs::path& path) {
  const Eigen::MatrixXd m = read_csv_matrix(path, false);
  if (m.size() == 0) throw FormatError(path.string() + ": empty posterior file");
  Posterior p = m.reshaped<Eigen::RowMajor>();
  return p;
}

std::string posterior_line(const Posterior& p) {
  std::string line;
  for (Index j = 0; j < p.size(); ++j) {
    if (j) line += ',';
    line += format_double(p(j));
  }
  return line;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tactile/kinesthetic grasp classification and late fusion", "hfz"};
  app.require_subcommand(1);

  // gen ----------------------------------------------------------------------
  SyntheticConfig gen_cfg;
  std::optional<std::uint64_t> gen_seed;
  fs::path gen_out;
  auto* gen = app.add_subcommand("gen", "write a synthetic squeeze-and-release dataset");
  gen->add_option("--classes", gen_cfg.classes, "object classes")->capture_default_str();
  gen->add_option("--grasps", gen_cfg.grasps_per_class, "grasps per class")->capture_default_str();
  gen->add_option("--frames", gen_cfg.tactile_frames, "tactile frames per grasp")->capture_default_str();
  gen->add_option("--samples", gen_cfg.kinesthetic_samples, "kinesthetic samples per grasp")
      ->capture_default_str();
  gen->add_option("--height", gen_cfg.height, "tactile rows")->capture_default_str();
  gen->add_option("--width", gen_cfg.width, "tactile columns")->capture_default_str();
  gen->add_option("--noise", gen_cfg.noise, "noise level (0 = identical grasps per class)")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // convert --------------------------------------------------------------------
  fs::path convert_in, convert_out;
  Index convert_height = 28, convert_width = 50;
  auto* convert = app.add_subcommand("convert", "convert an upstream export to the canonical format");
  convert->add_option("--in", convert_in, "upstream root directory")->required();
  convert->add_option("--out", convert_out, "output directory")->required();
  convert->add_option("--height", convert_height, "tactile rows")->capture_default_str();
  convert->add_option("--width", convert_width, "tactile columns")->capture_default_str();

  // train ----------------------------------------------------------------------
  fs::path train_data, train_out, train_tac_ckpt, train_kin_ckpt;
  std::string train_model, train_protocol = "bayesian";
  std::optional<std::uint64_t> train_seed;
  ScheduleFlags train_sched;
  Index train_batch = 8;
  ArchitectureFlags train_arch;
  CountFlags train_counts;
  auto* train = app.add_subcommand("train", "train one classifier or the fusion head");
  train->add_option("--data", train_data, "dataset directory or manifest")->required();
  train->add_option("--model", train_model, "tactile | kinesthetic | fusion")
      ->required()
      ->check(CLI::IsMember({"tactile", "kinesthetic", "fusion"}));
  train->add_option("--protocol", train_protocol, "bayesian | neural")
      ->check(CLI::IsMember({"bayesian", "neural"}))
      ->capture_default_str();
  train->add_option("--seed", train_seed, "split, initialization and shuffle seed")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--tactile-ckpt", train_tac_ckpt, "frozen tactile model (fusion only)");
  train->add_option("--kinesthetic-ckpt", train_kin_ckpt, "frozen kinesthetic model (fusion only)");
  train->add_option("--batch-size", train_batch, "mini-batch size")->capture_default_str();
  train_sched.attach(*train, "", "training");
  train_arch.attach(*train);
  train_counts.attach(*train);

  // eval -----------------------------------------------------------------------
  fs::path eval_data, eval_out, eval_tac, eval_kin, eval_fusion;
  std::string eval_protocol = "bayesian";
  std::optional<std::uint64_t> eval_seed;
  CountFlags eval_counts;
  auto* eval = app.add_subcommand("eval", "score checkpoints on the test split of a seed");
  eval->add_option("--data", eval_data, "dataset directory or manifest")->required();
  eval->add_option("--protocol", eval_protocol, "protocol the checkpoints were trained under")
      ->check(CLI::IsMember({"bayesian", "neural"}))
      ->capture_default_str();
  eval->add_option("--seed", eval_seed, "split seed used for training")->required();
  eval->add_option("--tactile-ckpt", eval_tac, "tactile checkpoint")->required();
  eval->add_option("--kinesthetic-ckpt", eval_kin, "kinesthetic checkpoint")->required();
  eval->add_option("--fusion-ckpt", eval_fusion, "fusion head checkpoint");
  eval->add_option("--out", eval_out, "output directory")->required();
  eval_counts.attach(*eval);

  // experiment -----------------------------------------------------------------
  fs::path exp_data, exp_out;
  int exp_runs = 20;
  int exp_parallel = 1;
  std::optional<std::uint64_t> exp_seed;
  ScheduleFlags exp_tac, exp_kin, exp_fus;
  Index exp_batch = 8;
  ArchitectureFlags exp_arch;
  CountFlags exp_counts;
  auto* experiment = app.add_subcommand("experiment", "repeated train/test protocol, four classifiers");
  experiment->add_option("--data", exp_data, "dataset directory or manifest")->required();
  experiment->add_option("--runs", exp_runs, "repetitions")->capture_default_str();
  experiment->add_option("--seed", exp_seed, "base seed; run r uses seed + r")->required();
  experiment->add_option("--out", exp_out, "output directory")->required();
  experiment->add_option("--parallel", exp_parallel, "concurrent runs")->capture_default_str();
  experiment->add_option("--batch-size", exp_batch, "mini-batch size")->capture_default_str();
  exp_tac.attach(*experiment, "tactile-", "tactile");
  exp_kin.attach(*experiment, "kinesthetic-", "kinesthetic");
  exp_fus.attach(*experiment, "fusion-", "fusion head");
  exp_arch.attach(*experiment);
  exp_counts.attach(*experiment);

  // fuse -----------------------------------------------------------------------
  fs::path fuse_p1, fuse_p2, fuse_prior, fuse_out;
  auto* fuse = app.add_subcommand("fuse", "Bayesian fusion of two posterior files");
  fuse->add_option("--p1", fuse_p1, "first posterior (comma-separated probabilities)")->required();
  fuse->add_option("--p2", fuse_p2, "second posterior")->required();
  fuse->add_option("--prior", fuse_prior, "class prior (default uniform)");
  fuse->add_option("--out", fuse_out, "optional output directory for fused.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      gen_cfg.seed = *gen_seed;
      require(gen_cfg.classes >= 2 && gen_cfg.grasps_per_class >= 1 && gen_cfg.tactile_frames >= 1 &&
                  gen_cfg.kinesthetic_samples >= 1 && gen_cfg.height >= 3 && gen_cfg.width >= 3 &&
                  gen_cfg.noise >= 0.0,
              "gen: need --classes >= 2, positive sizes, grid >= 3x3 and --noise >= 0");
      const Dataset ds = gen_synthetic(gen_cfg);
      save_dataset(ds, gen_out);
      out << "wrote " << ds.grasps.size() << " grasps to " << gen_out.string() << "\n";
    } else if (convert->parsed()) {
      require(convert_height > 0 && convert_width > 0, "convert: grid size must be positive");
      const Dataset ds = convert_upstream(convert_in, convert_height, convert_width);
      save_dataset(ds, convert_out);
      out << "converted " << ds.grasps.size() << " grasps in " << ds.classes() << " classes\n";
    } else if (train->parsed()) {
      train_arch.validate();
      train_counts.validate();
      const Protocol protocol = parse_protocol(train_protocol);
      const bool fusion = train_model == "fusion";
      require(!fusion || protocol == Protocol::Neural,
              "train: the fusion head is trained under --protocol neural");
      require(!fusion || (!train_tac_ckpt.empty() && !train_kin_ckpt.empty()),
              "train: --model fusion needs --tactile-ckpt and --kinesthetic-ckpt");
      const TrainSchedule preset = train_model == "tactile"       ? TrainSchedule::tactile_preset()
                                   : train_model == "kinesthetic" ? TrainSchedule::kinesthetic_preset()
                                                                  : TrainSchedule::fusion_preset();
      TrainSchedule schedule = train_sched.apply(preset, train_batch);
      schedule.shuffle_seed = *train_seed;

      const Dataset raw = load_dataset(train_data);
      const SplitPlan plan = make_split(raw, protocol, *train_seed, train_counts.counts);
      const Dataset ds = normalize(raw, plan);
      for (const auto& w : ds.normalization->warnings) err << "warning: " << w << "\n";
      TrainedModel model;
      if (fusion) {
        const ModelParams tac = load_checkpoint(train_tac_ckpt);
        const ModelParams kin = load_checkpoint(train_kin_ckpt);
        const TactileModelSpec ts = tactile_spec_from(tac, ds.tactile_height, ds.tactile_width);
        const KinestheticModelSpec ks = kinesthetic_spec_from(kin);
        std::vector<Posterior> pt, pk;
        std::vector<Index> labels;
        for (Index i : plan.fusion_train()) {
          const Grasp& g = ds.grasps[static_cast<std::size_t>(i)];
          pt.push_back(tactile_forward(ts, g.tactile, tac));
          pk.push_back(kinesthetic_forward(ks, g.kinesthetic, kin));
          labels.push_back(g.label);
        }
        model = train_fusion_head(pt, pk, labels, schedule, *train_seed, train_arch.fusion_width);
      } else {
        const ClassifierSpec spec = train_model == "tactile"
                                        ? ClassifierSpec{train_arch.tactile(ds)}
                                        : ClassifierSpec{train_arch.kinesthetic(ds)};
        model = train_classifier(spec, ds, plan, schedule, *train_seed);
      }
      fs::create_directories(train_out);
      save_checkpoint(train_out / (train_model + ".hfz"), model.params);
      write_text(train_out / "history.csv", model.history.to_csv());
      out << "trained " << train_model << " for " << model.history.epochs.size()
          << " epochs; selected epoch " << model.selected_epoch << "\n";
    } else if (eval->parsed()) {
      eval_counts.validate();
      const Protocol protocol = parse_protocol(eval_protocol);
      const Dataset raw = load_dataset(eval_data);
      const SplitPlan plan = make_split(raw, protocol, *eval_seed, eval_counts.counts);
      const Dataset ds = normalize(raw, plan);
      const ModelParams tac = load_checkpoint(eval_tac);
      const ModelParams kin = load_checkpoint(eval_kin);
      const TactileModelSpec ts = tactile_spec_from(tac, ds.tactile_height, ds.tactile_width);
      const KinestheticModelSpec ks = kinesthetic_spec_from(kin);
      require(ts.classes == ds.classes() && ks.classes == ds.classes(),
              "eval: checkpoint class count does not match the dataset");
      std::optional<ModelParams> head;
      if (!eval_fusion.empty()) head = load_checkpoint(eval_fusion);

      std::vector<ClassifierKind> kinds = {ClassifierKind::Tactile, ClassifierKind::Kinesthetic};
      if (head) kinds.push_back(ClassifierKind::NeuralFusion);
      kinds.push_back(ClassifierKind::BayesianFusion);
      std::vector<std::vector<Index>> predictions(kinds.size());
      std::vector<Index> labels;
      const ClassPrior prior = uniform_prior(ds.classes());
      for (Index i : plan.test()) {
        const Grasp& g = ds.grasps[static_cast<std::size_t>(i)];
        const Posterior pt = tactile_forward(ts, g.tactile, tac);
        const Posterior pk = kinesthetic_forward(ks, g.kinesthetic, kin);
        std::size_t k = 0;
        predictions[k++].push_back(map_class(pt));
        predictions[k++].push_back(map_class(pk));
        if (head) predictions[k++].push_back(map_class(neural_fuse_forward(pt, pk, *head)));
        predictions[k++].push_back(map_class(bayes_fuse(pt, pk, prior)));
        labels.push_back(g.label);
      }
      fs::create_directories(eval_out);
      std::string rates = "classifier,recognition_rate\n";
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        const ConfusionMatrix cm = confusion_matrix(predictions[k], labels, ds.classes());
        const double rate = recognition_rate(cm);
        rates += to_string(kinds[k]) + "," + format_double(rate) + "\n";
        write_text(eval_out / ("confusion_" + to_string(kinds[k]) + ".csv"),
                   confusion_csv(cm.row_normalized(), ds.class_names));
        out << to_string(kinds[k]) << ": " << rate << "\n";
      }
      write_text(eval_out / "eval.csv", rates);
    } else if (experiment->parsed()) {
      exp_arch.validate();
      exp_counts.validate();
      require(exp_runs >= 1, "experiment: --runs must be at least 1");
      require(exp_parallel >= 1, "experiment: --parallel must be at least 1");
      ExperimentConfig cfg;
      cfg.tactile.filters = exp_arch.filters;
      cfg.tactile.kernel_height = cfg.tactile.kernel_width = exp_arch.kernel;
      cfg.kinesthetic.hidden1 = exp_arch.hidden1;
      cfg.kinesthetic.hidden2 = exp_arch.hidden2;
      cfg.fusion_width = exp_arch.fusion_width;
      cfg.tactile_schedule = exp_tac.apply(TrainSchedule::tactile_preset(), exp_batch);
      cfg.kinesthetic_schedule = exp_kin.apply(TrainSchedule::kinesthetic_preset(), exp_batch);
      cfg.fusion_schedule = exp_fus.apply(TrainSchedule::fusion_preset(), exp_batch);
      cfg.counts = exp_counts.counts;
      cfg.parallel = exp_parallel;
      const Dataset raw = load_dataset(exp_data);
      const ExperimentReport report = run_experiment(raw, cfg, exp_runs, *exp_seed);
      write_report(report, exp_out);
      out << summary_csv(report);
    } else if (fuse->parsed()) {
      const Posterior p1 = read_posterior(fuse_p1);
      const Posterior p2 = read_posterior(fuse_p2);
      const ClassPrior prior = fuse_prior.empty() ? uniform_prior(p1.size()) : read_posterior(fuse_prior);
      const Posterior fused = bayes_fuse(p1, p2, prior);
      const Index cls = map_class(fused);
      out << posterior_line(fused) << "\n" << cls << "\n";
      if (!fuse_out.empty()) {
        fs::create_directories(fuse_out);
        write_text(fuse_out / "fused.csv", posterior_line(fused) + "\n" + std::to_string(cls) + "\n");
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace hfz
