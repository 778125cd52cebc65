#pragma once

#include <fstream>
#include <iostream>
#include <optional>

#include "artgest/eval/evaluate.hpp"
#include "artgest/eval/report.hpp"
#include "artgest/nn/checkpoint.hpp"
#include "artgest/training/class_weights.hpp"
#include "artgest/training/optimizer.hpp"

namespace artgest::training {

enum class EarlyStopMetric { val_macro_f1 };

/// Every under-specified training choice, pinned. Defaults follow the
/// paper-gap decisions: AdamW with a lower backbone learning rate, cosine
/// decay, weighted cross entropy with light smoothing, selection on
/// validation macro-F1.
struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double learning_rate = 1e-3;           // fusion head
  double backbone_learning_rate = 1e-4;  // both backbones
  double weight_decay = 1e-4;
  LrSchedule lr_schedule = LrSchedule::cosine;
  ClassWeighting class_weighting = ClassWeighting::inverse_frequency;
  double label_smoothing = 0.1;
  uint64_t seed = 42;
  int crop_size = 224;
  int context_size = 224;
  std::array<float, 3> norm_mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> norm_std{0.229f, 0.224f, 0.225f};
  double pad_ratio = 0.0;
  EarlyStopMetric early_stop_metric = EarlyStopMetric::val_macro_f1;
  int patience = 10;
  int num_workers = 0;
  std::string train_split = "train";
  std::string val_split = "val";

  void validate() const {
    require(epochs > 0, ErrorCode::InvalidArgument, "epochs must be positive");
    require(batch_size > 0, ErrorCode::InvalidArgument, "batch_size must be positive");
    require(label_smoothing >= 0.0 && label_smoothing < 0.5, ErrorCode::InvalidArgument,
            "label_smoothing must be in [0,0.5)");
    require(patience > 0, ErrorCode::InvalidArgument, "patience must be positive");
    require(crop_size > 0 && context_size > 0, ErrorCode::InvalidArgument,
            "input sizes must be positive");
  }

  data::PreprocessConfig preprocess() const {
    data::PreprocessConfig p;
    p.crop_size = crop_size;
    p.context_size = context_size;
    p.mean = norm_mean;
    p.stddev = norm_std;
    p.pad_ratio = pad_ratio;
    return p;
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0;  // effective head lr this epoch
};

struct TrainState {
  std::vector<EpochStats> epoch_history;
  std::string best_checkpoint_path;
  double best_val_macro_f1 = 0.0;
  int best_epoch = 0;
  uint64_t seed = 0;
};

/// Loss over one batch with the configured weighting and smoothing.
inline Var weighted_cross_entropy(const Var& logits, const std::vector<int>& labels,
                                  const ClassWeights& weights, double smoothing) {
  return ops::weighted_cross_entropy(logits, labels, weights.w,
                                     static_cast<float>(smoothing));
}

/// Strict-improvement early stopping: stop once `patience` consecutive
/// observations fail to beat the best seen value.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  /// Returns true when `value` improves on the best so far.
  bool observe(double value) {
    ++count_;
    if (value > best_) {
      best_ = value;
      best_index_ = count_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_index() const { return best_index_; }  // 1-based observation index

 private:
  int patience_;
  int count_ = 0;
  int stale_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
  int best_index_ = 0;
};

/// Joint optimization of both backbones and the head. Keeps the checkpoint
/// with the best validation macro-F1 under `out_dir`, appends one JSON line
/// per epoch to train_log.jsonl, stops early after `patience` non-improving
/// epochs, and derives every random stream from cfg.seed.
inline TrainState train(nn::TwoStreamModel& model, const data::DatasetManifest& manifest,
                        const TrainConfig& cfg, const std::filesystem::path& out_dir,
                        std::ostream* echo = nullptr) {
  cfg.validate();
  require(model.num_classes() == manifest.labels.size(), ErrorCode::ShapeMismatch,
          "model/manifest class count mismatch");
  require(manifest.has_split(cfg.train_split), ErrorCode::UnknownSplit, cfg.train_split);
  require(manifest.has_split(cfg.val_split), ErrorCode::UnknownSplit, cfg.val_split);
  std::filesystem::create_directories(out_dir);

  const data::PreprocessConfig pre = cfg.preprocess();
  data::BatchLoader loader(manifest, cfg.train_split, pre, /*augment=*/true, cfg.seed,
                           cfg.num_workers);

  const ClassWeights weights = compute_class_weights(
      counts_in_label_order(data::class_distribution(manifest, cfg.train_split),
                            manifest.labels),
      cfg.class_weighting);

  ParamGroup backbone_group{{}, cfg.backbone_learning_rate};
  ParamGroup head_group{{}, cfg.learning_rate};
  for (auto& [name, p] : model.named_parameters())
    (name.rfind("head.", 0) == 0 ? head_group : backbone_group).params.push_back(p);
  Optimizer opt(cfg.optimizer, {backbone_group, head_group}, cfg.weight_decay);

  Rng dropout_rng(derive_seed(cfg.seed, {kDropoutStream}));

  TrainState state;
  state.seed = cfg.seed;
  state.best_val_macro_f1 = -1.0;
  const auto best_path = out_dir / "best.agck";
  const auto log_path = out_dir / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::app);

  EarlyStopper stopper(cfg.patience);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.set_training(true);
    const double scale = lr_scale(cfg.lr_schedule, epoch - 1, cfg.epochs);
    double loss_sum = 0.0;
    int64_t seen = 0;

    loader.for_each_batch(epoch, cfg.batch_size, [&](const data::Batch& batch) {
      opt.zero_grad();
      Var crop = make_leaf(batch.crops);
      Var ctx = model.variant() == Variant::with_context ? make_leaf(batch.contexts) : nullptr;
      Var logits = model.forward(crop, ctx, &dropout_rng);
      Var loss = weighted_cross_entropy(logits, batch.labels, weights, cfg.label_smoothing);
      if (!std::isfinite(loss->value[0])) {
        log.flush();
        fail(ErrorCode::DivergenceDetected,
             "non-finite loss at epoch " + std::to_string(epoch) + " (state saved to " +
                 out_dir.string() + ")");
      }
      backward(loss);
      opt.step(scale);
      loss_sum += static_cast<double>(loss->value[0]) * batch.size();
      seen += batch.size();
    });

    const eval::MetricsReport val =
        eval::evaluate_split(model, manifest, cfg.val_split, pre, cfg.batch_size);

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / std::max<int64_t>(1, seen);
    stats.val_macro_f1 = val.macro_f1;
    stats.lr = cfg.learning_rate * scale;
    state.epoch_history.push_back(stats);

    json line{{"epoch", stats.epoch},
              {"train_loss", stats.train_loss},
              {"val_macro_f1", stats.val_macro_f1},
              {"lr", stats.lr}};
    log << line.dump() << "\n";
    log.flush();
    if (echo) *echo << line.dump() << std::endl;

    if (stopper.observe(stats.val_macro_f1)) {
      state.best_val_macro_f1 = stats.val_macro_f1;
      state.best_epoch = epoch;
      nn::save_checkpoint(model, manifest.labels, pre, best_path);
      state.best_checkpoint_path = best_path.string();
    } else if (stopper.should_stop()) {
      break;
    }
  }
  return state;
}

/// One independent train + test evaluation per seed.
struct SeedRun {
  TrainState train_state;
  eval::MetricsReport test_report;
};

struct MultiSeedResult {
  std::vector<SeedRun> runs;
  eval::RunSetReport report;  // per-run test metrics + aggregate
};

/// Per-seed pipeline: fresh model (init stream derived from the seed),
/// training, then evaluation of the best checkpoint on `test_split`.
inline MultiSeedResult run_multi_seed(const nn::BackboneSpec& crop_spec,
                                      const nn::BackboneSpec& context_spec,
                                      const nn::FusionHeadConfig& head_cfg, Variant variant,
                                      const data::DatasetManifest& manifest,
                                      const TrainConfig& cfg_base,
                                      const std::vector<uint64_t>& seeds,
                                      const std::filesystem::path& out_dir,
                                      const std::string& test_split = "test",
                                      std::ostream* echo = nullptr) {
  require(!seeds.empty(), ErrorCode::InvalidArgument, "no seeds");
  MultiSeedResult result;
  result.report.backbone = to_string(crop_spec.family);
  result.report.variant = variant;

  for (size_t i = 0; i < seeds.size(); ++i) {
    TrainConfig cfg = cfg_base;
    cfg.seed = seeds[i];
    const auto run_dir = out_dir / ("seed_" + std::to_string(seeds[i]) + "_run" +
                                    std::to_string(i));
    Rng init_rng(derive_seed(cfg.seed, {kInitStream}));
    auto model = nn::build_model(crop_spec, context_spec, head_cfg,
                                 manifest.labels.size(), init_rng, variant);
    SeedRun run;
    run.train_state = train(*model, manifest, cfg, run_dir, echo);

    auto best = nn::load_checkpoint(run.train_state.best_checkpoint_path);
    run.test_report =
        eval::evaluate_split(*best.model, manifest, test_split, cfg.preprocess(),
                             cfg.batch_size, "seed_" + std::to_string(seeds[i]), cfg.seed);
    result.report.per_run.push_back(run.test_report);
    result.runs.push_back(std::move(run));
  }
  return result;
}

}  // namespace artgest::training
