#pragma once

#include "artgest/data/loader.hpp"
#include "artgest/eval/metrics.hpp"
#include "artgest/nn/two_stream.hpp"

namespace artgest::eval {

/// Argmax class ids for one batch, eval mode, no tape.
inline std::vector<int> predict_batch(nn::TwoStreamModel& model, const data::Batch& batch) {
  NoGradGuard no_grad;
  Var crop = make_leaf(batch.crops);
  Var ctx = model.variant() == Variant::with_context ? make_leaf(batch.contexts) : nullptr;
  Var logits = model.forward(crop, ctx);
  std::vector<int> preds(batch.size());
  const int64_t c = logits->value.dim(1);
  for (int64_t i = 0; i < batch.size(); ++i) {
    const float* row = logits->value.data() + i * c;
    int best = 0;
    for (int64_t k = 1; k < c; ++k)
      if (row[k] > row[best]) best = static_cast<int>(k);
    preds[i] = best;
  }
  return preds;
}

/// Deterministic full-split evaluation: no augmentation, manifest order,
/// eval-mode forward. The report's variant is the model's own.
inline MetricsReport evaluate_split(nn::TwoStreamModel& model,
                                    const data::DatasetManifest& manifest,
                                    const std::string& split,
                                    const data::PreprocessConfig& preprocess,
                                    int batch_size = 32, const std::string& run_id = "",
                                    uint64_t seed = 0) {
  require(model.num_classes() == manifest.labels.size(), ErrorCode::ShapeMismatch,
          "model classes " + std::to_string(model.num_classes()) + " vs manifest " +
              std::to_string(manifest.labels.size()));
  const bool was_training = model.is_training();
  model.set_training(false);

  data::BatchLoader loader(manifest, split, preprocess, /*augment=*/false, /*seed=*/0);
  std::vector<int> preds, labels;
  loader.for_each_batch(0, batch_size, [&](const data::Batch& batch) {
    auto batch_preds = predict_batch(model, batch);
    preds.insert(preds.end(), batch_preds.begin(), batch_preds.end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  });

  model.set_training(was_training);
  const ConfusionMatrix cm = confusion_matrix(preds, labels, manifest.labels.size());
  return make_report(cm, run_id, seed, model.variant());
}

}  // namespace artgest::eval
