#include "cli.hpp"

#include <CLI11.hpp>
#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "memefuse/checkpoint.hpp"
#include "memefuse/data.hpp"
#include "memefuse/errors.hpp"
#include "memefuse/evaluation.hpp"
#include "memefuse/experiment.hpp"
#include "memefuse/fusion.hpp"
#include "memefuse/gradcheck.hpp"
#include "memefuse/losses.hpp"
#include "memefuse/training.hpp"

namespace memefuse {

namespace {

namespace fs = std::filesystem;

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// One run at a time per output directory: the lock file is created
// exclusively and removed when the command finishes.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    path_ = (dir / ".memefuse.lock").string();
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw ContractError("output directory is locked by another run (" +
                          path_ + ")");
    }
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
  std::string path_;
};

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw ContractError("cannot create output directory " + dir + ": " +
                        ec.message());
  }
  return fs::path(dir);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) {
    throw ContractError("cannot write " + path.string());
  }
  f << content;
  if (!f.good()) {
    throw ContractError("failed while writing " + path.string());
  }
}

LateCombine parse_late_combine(const std::string& token) {
  if (token == "mean_prob") return LateCombine::MeanProb;
  if (token == "mean_logit") return LateCombine::MeanLogit;
  if (token == "max_prob") return LateCombine::MaxProb;
  throw ContractError("unknown late-combine mode '" + token +
                      "': expected one of mean_prob, mean_logit, max_prob");
}

LrSchedule parse_schedule(const std::string& token) {
  if (token == "linear") return LrSchedule::WarmupLinearDecay;
  if (token == "constant") return LrSchedule::WarmupConstant;
  throw ContractError("unknown schedule '" + token +
                      "': expected linear or constant");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::size_t per_class = 100;
  SyntheticSpec spec;
  std::vector<double> ratios{0.7, 0.15, 0.15};
  std::uint64_t seed = 42;
};

std::string synth_summary(const SynthArgs& a, const SplitResult& split) {
  std::string s = "synthetic dataset summary\n";
  s += "seed " + std::to_string(a.seed) + "\n";
  s += "samples_per_class " + std::to_string(a.per_class) + "\n";
  s += "text_dim " + std::to_string(a.spec.text_dim) + "\n";
  s += "image_dim " + std::to_string(a.spec.image_dim) + "\n";
  s += "text_len " + std::to_string(a.spec.text_len) + "\n";
  s += "image_len " + std::to_string(a.spec.image_len) + "\n";
  s += "joint_signal " + format_real(a.spec.joint_signal) + "\n";
  s += "label_noise " + format_real(a.spec.label_noise) + "\n";
  s += "cue_jitter " + format_real(a.spec.cue_jitter) + "\n";
  s += "distractor_sigma " + format_real(a.spec.distractor_sigma) + "\n";
  s += "ratios " + format_real(a.ratios[0]) + " " + format_real(a.ratios[1]) +
       " " + format_real(a.ratios[2]) + "\n";
  const std::array<std::pair<const char*, const Dataset*>, 3> parts = {
      {{"train", &split.train}, {"val", &split.val}, {"test", &split.test}}};
  for (const auto& [name, d] : parts) {
    const ClassDistribution dist = class_distribution(*d);
    s += std::string("split ") + name + ": total " +
         std::to_string(dist.total) + " by_label " +
         std::to_string(dist.by_label[0]) + " " +
         std::to_string(dist.by_label[1]) + " " +
         std::to_string(dist.by_label[2]) + "\n";
  }
  return s;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const fs::path dir = prepare_out_dir(a.out_dir);
  DirLock lock(dir);
  SyntheticSpec spec = a.spec;
  spec.samples_per_class = {a.per_class, a.per_class, a.per_class};
  Dataset d = generate_synthetic(spec, a.seed);
  const std::array<double, 3> ratios{a.ratios[0], a.ratios[1], a.ratios[2]};
  SplitResult split = split_dataset(d, ratios, a.seed);
  save_manifest(split.train, (dir / "train.jsonl").string());
  save_manifest(split.val, (dir / "val.jsonl").string());
  save_manifest(split.test, (dir / "test.jsonl").string());
  SynthArgs resolved = a;
  resolved.spec = spec;
  write_file(dir / "synth_summary.txt", synth_summary(resolved, split));
  out << "wrote " << (dir / "train.jsonl").string() << " ("
      << split.train.records.size() << " records)\n";
  out << "wrote " << (dir / "val.jsonl").string() << " ("
      << split.val.records.size() << " records)\n";
  out << "wrote " << (dir / "test.jsonl").string() << " ("
      << split.test.records.size() << " records)\n";
  out << "wrote " << (dir / "synth_summary.txt").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string train_path;
  std::string val_path;
  std::string out_dir;
  std::string strategy = "mcfm";
  std::size_t model_dim = 64;
  std::size_t heads = 8;
  std::size_t mlp_hidden = 64;
  double dropout = 0.5;
  std::size_t co_attention_depth = 1;
  bool freeze_projections = false;
  std::string late_combine = "mean_prob";
  TrainConfig train;
  std::string schedule = "linear";
  std::vector<double> class_weights;  // empty = unweighted
  bool inverse_frequency = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  Dataset train_data = load_manifest(a.train_path);
  Dataset val_data = load_manifest(a.val_path);
  if (train_data.records.empty()) {
    throw DataError("training manifest has no records: " + a.train_path);
  }
  if (val_data.records.empty()) {
    throw DataError("validation manifest has no records: " + a.val_path);
  }
  const std::vector<TrainingExample> train_set = to_examples(train_data);
  const std::vector<TrainingExample> val_set = to_examples(val_data);

  ModelConfig mc;
  mc.strategy = parse_strategy(a.strategy);
  mc.text_input_dim = train_set.front().text.cols();
  mc.image_input_dim = train_set.front().image.cols();
  mc.model_dim = a.model_dim;
  mc.heads = a.heads;
  mc.mlp_hidden = a.mlp_hidden;
  mc.dropout_rate = a.dropout;
  mc.co_attention_depth = a.co_attention_depth;
  mc.freeze_projections = a.freeze_projections;
  mc.late_combine = parse_late_combine(a.late_combine);

  TrainConfig tc = a.train;
  tc.schedule = parse_schedule(a.schedule);
  if (a.inverse_frequency && !a.class_weights.empty()) {
    throw ContractError(
        "--class-weights and --inverse-frequency-weights are exclusive");
  }
  if (a.inverse_frequency) {
    const ClassDistribution dist = class_distribution(train_data);
    tc.loss.class_weights = inverse_frequency_weights(
        {dist.by_label[0], dist.by_label[1], dist.by_label[2]});
  } else if (!a.class_weights.empty()) {
    tc.loss.class_weights = a.class_weights;
  }

  const fs::path dir = prepare_out_dir(a.out_dir);
  DirLock lock(dir);

  Rng init_rng = Rng(tc.seed).fork("model-init");
  TrainResult result =
      train(FusionModel(mc, init_rng), train_set, val_set, tc);

  save_checkpoint(result.model, (dir / "checkpoint.txt").string());
  write_file(dir / "history.csv", history_csv(result.history));

  char line[160];
  std::snprintf(line, sizeof(line),
                "trained %s for %zu epochs (best epoch %zu, val macro F1 "
                "%.4f)\n",
                a.strategy.c_str(), result.history.stopping_epoch,
                result.history.best_epoch, result.history.best_val_macro_f1);
  out << line;
  out << "checkpoint " << (dir / "checkpoint.txt").string() << "\n";
  out << "history " << (dir / "history.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint_path;
  std::string data_path;
  std::string out_dir;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  FusionModel model = load_checkpoint(a.checkpoint_path);
  Dataset data = load_manifest(a.data_path);
  if (data.records.empty()) {
    throw DataError("evaluation manifest has no records: " + a.data_path);
  }
  const std::vector<TrainingExample> examples = to_examples(data);
  const std::vector<PredictionRecord> preds = predict(model, examples);
  const EvalReport report = build_eval_report(preds, kNumClasses);

  const fs::path dir = prepare_out_dir(a.out_dir);
  DirLock lock(dir);
  write_file(dir / "eval_report.txt",
             render_eval_report(report, class_names()));
  write_file(dir / "confusion.csv",
             render_confusion_csv(report.overall.confusion, class_names()));

  char line[96];
  std::snprintf(line, sizeof(line), "accuracy %.4f macro_f1 %.4f (%zu records)\n",
                report.overall.accuracy, report.overall.macro_f1,
                preds.size());
  out << line;
  out << "report " << (dir / "eval_report.txt").string() << "\n";
  out << "confusion " << (dir / "confusion.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string strategy = "all";
  std::size_t model_dim = 8;
  std::size_t heads = 2;
  std::size_t text_dim = 5;
  std::size_t image_dim = 6;
  std::size_t text_len = 3;
  std::size_t image_len = 4;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double step = 1e-5;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<Strategy> strategies;
  if (a.strategy == "all") {
    for (const std::string& token : strategy_tokens()) {
      strategies.push_back(parse_strategy(token));
    }
  } else {
    strategies.push_back(parse_strategy(a.strategy));
  }

  bool all_passed = true;
  for (Strategy s : strategies) {
    ModelConfig mc;
    mc.strategy = s;
    mc.text_input_dim = a.text_dim;
    mc.image_input_dim = a.image_dim;
    mc.model_dim = a.model_dim;
    mc.heads = a.heads;
    mc.mlp_hidden = a.model_dim;
    mc.dropout_rate = 0.0;

    Rng rng(a.seed);
    Rng model_rng = rng.fork("model-" + strategy_name(s));
    Rng data_rng = rng.fork("inputs-" + strategy_name(s));
    FusionModel model(mc, model_rng);
    const Tensor text =
        Tensor::randn({a.text_len, a.text_dim}, data_rng, 1.0);
    const Tensor image =
        Tensor::randn({a.image_len, a.image_dim}, data_rng, 1.0);

    LossConfig loss_cfg;
    const bool corrupt = a.corrupt;
    auto loss_fn = [&model, &text, &image, &loss_cfg, corrupt]() {
      Tensor loss = focal_loss(model.forward(text, image), 1, loss_cfg);
      if (corrupt) {
        // Negative control: a term whose value is always zero but whose
        // analytic gradient is one, so the check must report a mismatch.
        const Tensor& p = model.params().items().front().second;
        Tensor drift = sub(sum(p), Tensor::scalar(sum(p).value()));
        loss = add(loss, drift);
      }
      return loss;
    };

    const GradCheckReport report =
        grad_check(loss_fn, model.params(), a.step, a.tolerance);
    out << "strategy " << strategy_name(s) << "\n";
    out << render_grad_check(report);
    all_passed = all_passed && report.passed;
  }
  out << (all_passed ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return all_passed ? 0 : 3;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string out_dir;
  ComparisonSpec spec = ComparisonSpec::desk_default();
  std::size_t per_class = 600;
  std::vector<std::string> strategies;  // empty = all
};

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  ComparisonSpec spec = a.spec;
  spec.data.samples_per_class = {a.per_class, a.per_class, a.per_class};
  spec.model.text_input_dim = spec.data.text_dim;
  spec.model.image_input_dim = spec.data.image_dim;
  for (const std::string& token : a.strategies) {
    spec.strategies.push_back(parse_strategy(token));
  }

  const fs::path dir = prepare_out_dir(a.out_dir);
  DirLock lock(dir);
  const ComparisonResult result = run_comparison(spec, &err);
  write_file(dir / "comparison.csv", comparison_csv(result));
  write_file(dir / "comparison_summary.txt", comparison_summary(result));
  out << comparison_summary(result);
  out << "table " << (dir / "comparison.csv").string() << "\n";
  out << "summary " << (dir / "comparison_summary.txt").string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{
      "memefuse: desk-scale multimodal fusion classifier.\n"
      "Every flag can also be set through the environment with the "
      "MEMEFUSE_ prefix (for example MEMEFUSE_SEED)."};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "generate a synthetic dataset and write split manifests");
  synth_cmd->add_option("--out", synth.out_dir, "output directory")
      ->required()
      ->envname("MEMEFUSE_OUT");
  synth_cmd->add_option("--per-class", synth.per_class, "samples per class")
      ->capture_default_str();
  synth_cmd->add_option("--text-dim", synth.spec.text_dim, "text feature dim")
      ->capture_default_str();
  synth_cmd
      ->add_option("--image-dim", synth.spec.image_dim, "image feature dim")
      ->capture_default_str();
  synth_cmd
      ->add_option("--text-len", synth.spec.text_len, "text sequence length")
      ->capture_default_str();
  synth_cmd
      ->add_option("--image-len", synth.spec.image_len,
                   "image sequence length")
      ->capture_default_str();
  synth_cmd
      ->add_option("--joint-signal", synth.spec.joint_signal,
                   "fraction of samples where only the modality pair "
                   "identifies the class")
      ->capture_default_str();
  synth_cmd
      ->add_option("--label-noise", synth.spec.label_noise,
                   "fraction of samples with uniformly resampled labels")
      ->capture_default_str();
  synth_cmd
      ->add_option("--cue-jitter", synth.spec.cue_jitter,
                   "noise scale on the informative row")
      ->capture_default_str();
  synth_cmd
      ->add_option("--distractor-sigma", synth.spec.distractor_sigma,
                   "scale of uninformative rows")
      ->capture_default_str();
  synth_cmd
      ->add_option("--ratios", synth.ratios,
                   "train/val/test split fractions")
      ->expected(3)
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "generation seed")
      ->capture_default_str()
      ->envname("MEMEFUSE_SEED");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand(
      "train", "train a fusion model on manifest data");
  train_cmd->add_option("--train", train_args.train_path, "training manifest")
      ->required();
  train_cmd->add_option("--val", train_args.val_path, "validation manifest")
      ->required();
  train_cmd->add_option("--out", train_args.out_dir, "output directory")
      ->required()
      ->envname("MEMEFUSE_OUT");
  train_cmd
      ->add_option("--strategy", train_args.strategy,
                   "fusion strategy (early, late, clip_style, cross_t2i, "
                   "cross_i2t, mcfm, unimodal_text, unimodal_image)")
      ->capture_default_str()
      ->envname("MEMEFUSE_STRATEGY");
  train_cmd
      ->add_option("--model-dim", train_args.model_dim, "shared model dim")
      ->capture_default_str();
  train_cmd->add_option("--heads", train_args.heads, "attention heads")
      ->capture_default_str();
  train_cmd
      ->add_option("--mlp-hidden", train_args.mlp_hidden,
                   "classifier hidden width")
      ->capture_default_str();
  train_cmd
      ->add_option("--dropout", train_args.dropout,
                   "dropout rate before the final classifier layer")
      ->capture_default_str();
  train_cmd
      ->add_option("--co-attention-depth", train_args.co_attention_depth,
                   "stacked co-attention layers (mcfm)")
      ->capture_default_str();
  train_cmd->add_flag("--freeze-projections", train_args.freeze_projections,
                      "keep modality projections at their initial values");
  train_cmd
      ->add_option("--late-combine", train_args.late_combine,
                   "late-fusion combination (mean_prob, mean_logit, "
                   "max_prob)")
      ->capture_default_str();
  train_cmd
      ->add_option("--lr", train_args.train.learning_rate,
                   "peak learning rate")
      ->capture_default_str();
  train_cmd
      ->add_option("--weight-decay", train_args.train.weight_decay,
                   "decoupled weight decay")
      ->capture_default_str();
  train_cmd
      ->add_option("--micro-batch", train_args.train.micro_batch,
                   "micro-batch size")
      ->capture_default_str();
  train_cmd
      ->add_option("--accumulation-steps",
                   train_args.train.accumulation_steps,
                   "micro-batches accumulated per optimizer step")
      ->capture_default_str();
  train_cmd
      ->add_option("--warmup-fraction", train_args.train.warmup_fraction,
                   "fraction of total steps spent in linear warmup")
      ->capture_default_str();
  train_cmd
      ->add_option("--max-epochs", train_args.train.max_epochs,
                   "epoch budget")
      ->capture_default_str();
  train_cmd
      ->add_option("--patience", train_args.train.patience,
                   "epochs without F1 improvement before stopping")
      ->capture_default_str();
  train_cmd
      ->add_option("--clip-norm", train_args.train.clip_max_norm,
                   "global gradient-norm ceiling")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_args.train.seed, "run seed")
      ->capture_default_str()
      ->envname("MEMEFUSE_SEED");
  train_cmd
      ->add_option("--schedule", train_args.schedule,
                   "learning-rate schedule after warmup (linear, constant)")
      ->capture_default_str();
  train_cmd
      ->add_option("--focal-alpha", train_args.train.loss.alpha,
                   "focal loss alpha")
      ->capture_default_str();
  train_cmd
      ->add_option("--focal-gamma", train_args.train.loss.gamma,
                   "focal loss focusing exponent")
      ->capture_default_str();
  train_cmd
      ->add_option("--label-smoothing", train_args.train.loss.smoothing,
                   "label smoothing epsilon")
      ->capture_default_str();
  train_cmd
      ->add_option("--class-weights", train_args.class_weights,
                   "explicit per-class loss weights")
      ->expected(3);
  train_cmd->add_flag(
      "--inverse-frequency-weights", train_args.inverse_frequency,
      "derive class weights from training-split label counts");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "evaluate a checkpoint on a manifest and write the report");
  eval_cmd
      ->add_option("--checkpoint", eval_args.checkpoint_path,
                   "checkpoint file")
      ->required();
  eval_cmd->add_option("--data", eval_args.data_path, "manifest to score")
      ->required();
  eval_cmd->add_option("--out", eval_args.out_dir, "output directory")
      ->required()
      ->envname("MEMEFUSE_OUT");

  GradcheckArgs grad_args;
  CLI::App* grad_cmd = app.add_subcommand(
      "gradcheck",
      "compare analytic gradients against central finite differences");
  grad_cmd
      ->add_option("--strategy", grad_args.strategy,
                   "strategy token or 'all'")
      ->capture_default_str()
      ->envname("MEMEFUSE_STRATEGY");
  grad_cmd->add_option("--model-dim", grad_args.model_dim, "model dim")
      ->capture_default_str();
  grad_cmd->add_option("--heads", grad_args.heads, "attention heads")
      ->capture_default_str();
  grad_cmd->add_option("--text-dim", grad_args.text_dim, "text feature dim")
      ->capture_default_str();
  grad_cmd
      ->add_option("--image-dim", grad_args.image_dim, "image feature dim")
      ->capture_default_str();
  grad_cmd->add_option("--text-len", grad_args.text_len, "text rows")
      ->capture_default_str();
  grad_cmd->add_option("--image-len", grad_args.image_len, "image rows")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad_args.seed, "init seed")
      ->capture_default_str()
      ->envname("MEMEFUSE_SEED");
  grad_cmd->add_option("--tolerance", grad_args.tolerance,
                       "max relative error accepted")
      ->capture_default_str();
  grad_cmd->add_option("--step", grad_args.step, "finite-difference step")
      ->capture_default_str();
  grad_cmd->add_flag("--corrupt", grad_args.corrupt,
                     "inject a wrong gradient as a negative control");

  ReportArgs report_args;
  CLI::App* report_cmd = app.add_subcommand(
      "report",
      "run the seeded strategy comparison and emit its tables");
  report_cmd->add_option("--out", report_args.out_dir, "output directory")
      ->required()
      ->envname("MEMEFUSE_OUT");
  report_cmd
      ->add_option("--seeds", report_args.spec.seeds,
                   "dataset/training seeds")
      ->capture_default_str();
  report_cmd
      ->add_option("--strategies", report_args.strategies,
                   "strategy tokens to compare (default: all)");
  report_cmd
      ->add_option("--per-class", report_args.per_class, "samples per class")
      ->capture_default_str();
  report_cmd
      ->add_option("--joint-signal", report_args.spec.data.joint_signal,
                   "joint-signal fraction")
      ->capture_default_str();
  report_cmd
      ->add_option("--label-noise", report_args.spec.data.label_noise,
                   "label-noise fraction")
      ->capture_default_str();
  report_cmd
      ->add_option("--cue-jitter", report_args.spec.data.cue_jitter,
                   "noise scale on the informative row")
      ->capture_default_str();
  report_cmd
      ->add_option("--distractor-sigma",
                   report_args.spec.data.distractor_sigma,
                   "scale of uninformative rows")
      ->capture_default_str();
  report_cmd
      ->add_option("--text-dim", report_args.spec.data.text_dim,
                   "text feature dim")
      ->capture_default_str();
  report_cmd
      ->add_option("--image-dim", report_args.spec.data.image_dim,
                   "image feature dim")
      ->capture_default_str();
  report_cmd
      ->add_option("--text-len", report_args.spec.data.text_len, "text rows")
      ->capture_default_str();
  report_cmd
      ->add_option("--image-len", report_args.spec.data.image_len,
                   "image rows")
      ->capture_default_str();
  report_cmd
      ->add_option("--model-dim", report_args.spec.model.model_dim,
                   "model dim")
      ->capture_default_str();
  report_cmd
      ->add_option("--heads", report_args.spec.model.heads,
                   "attention heads")
      ->capture_default_str();
  report_cmd
      ->add_option("--mlp-hidden", report_args.spec.model.mlp_hidden,
                   "classifier hidden width")
      ->capture_default_str();
  report_cmd
      ->add_option("--dropout", report_args.spec.model.dropout_rate,
                   "dropout rate")
      ->capture_default_str();
  report_cmd
      ->add_option("--lr", report_args.spec.train.learning_rate,
                   "peak learning rate")
      ->capture_default_str();
  report_cmd
      ->add_option("--micro-batch", report_args.spec.train.micro_batch,
                   "micro-batch size")
      ->capture_default_str();
  report_cmd
      ->add_option("--accumulation-steps",
                   report_args.spec.train.accumulation_steps,
                   "micro-batches per optimizer step")
      ->capture_default_str();
  report_cmd
      ->add_option("--max-epochs", report_args.spec.train.max_epochs,
                   "epoch budget per run")
      ->capture_default_str();
  report_cmd
      ->add_option("--patience", report_args.spec.train.patience,
                   "early-stopping patience")
      ->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("memefuse");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*grad_cmd) return cmd_gradcheck(grad_args, out);
    if (*report_cmd) return cmd_report(report_args, out, err);
    throw ContractError("no subcommand selected");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace memefuse
