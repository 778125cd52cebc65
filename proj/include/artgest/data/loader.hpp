#pragma once

#include <atomic>
#include <thread>

#include "artgest/data/example.hpp"

namespace artgest::data {

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// A stacked mini-batch: crops [N,3,S,S], contexts [N,3,S,S], labels [N].
struct Batch {
  Tensor crops;
  Tensor contexts;
  std::vector<int> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

/// Deterministic batched example stream over one split.
///
/// Reproducibility contract: the augmentation stream of an example depends
/// only on (base_seed, epoch, instance_id), and the shuffle order only on
/// (base_seed, epoch). Worker threads fill preassigned batch slots, so the
/// produced batches are bit-identical for any worker count.
class BatchLoader {
 public:
  BatchLoader(const DatasetManifest& manifest, const std::string& split,
              const PreprocessConfig& cfg, bool augment, uint64_t base_seed,
              int num_workers = 0)
      : manifest_(manifest),
        items_(manifest.split_instances(split)),
        cfg_(cfg),
        augment_(augment),
        base_seed_(base_seed),
        num_workers_(num_workers),
        store_(manifest) {}

  int64_t size() const { return static_cast<int64_t>(items_.size()); }

  /// Instance order for one epoch: shuffled when augmenting (training),
  /// manifest order otherwise.
  std::vector<int64_t> epoch_order(int64_t epoch) const {
    std::vector<int64_t> order(items_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    if (augment_) {
      Rng rng(derive_seed(base_seed_, {kShuffleStream, static_cast<uint64_t>(epoch)}));
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);
    }
    return order;
  }

  Example load_example(int64_t item_index, int64_t epoch) {
    const PersonInstance* inst = items_[item_index];
    Rng rng(derive_seed(base_seed_, {kAugmentStream, static_cast<uint64_t>(epoch),
                                     fnv1a(inst->instance_id)}));
    return make_example_from_image(store_.get(inst->image_id), *inst, cfg_,
                                   augment_, &rng);
  }

  /// Assembles the batch covering order[first, first+count).
  Batch make_batch(const std::vector<int64_t>& order, int64_t first, int64_t count,
                   int64_t epoch) {
    Batch batch;
    batch.crops = Tensor({count, 3, cfg_.crop_size, cfg_.crop_size});
    batch.contexts = Tensor({count, 3, cfg_.context_size, cfg_.context_size});
    batch.labels.resize(count);

    auto fill_slot = [&](int64_t slot) {
      Example ex = load_example(order[first + slot], epoch);
      std::copy(ex.crop.begin(), ex.crop.end(), batch.crops.data() + slot * ex.crop.numel());
      std::copy(ex.context.begin(), ex.context.end(),
                batch.contexts.data() + slot * ex.context.numel());
      batch.labels[slot] = ex.label_id;
    };

    if (num_workers_ <= 1) {
      for (int64_t s = 0; s < count; ++s) fill_slot(s);
    } else {
      std::vector<std::thread> pool;
      std::atomic<int64_t> next{0};
      for (int w = 0; w < num_workers_; ++w)
        pool.emplace_back([&] {
          for (int64_t s; (s = next.fetch_add(1)) < count;) fill_slot(s);
        });
      for (auto& t : pool) t.join();
    }
    return batch;
  }

  /// Runs `fn` over every batch of the epoch, in order.
  template <typename Fn>
  void for_each_batch(int64_t epoch, int64_t batch_size, Fn&& fn) {
    const auto order = epoch_order(epoch);
    for (int64_t first = 0; first < size(); first += batch_size) {
      const int64_t count = std::min(batch_size, size() - first);
      fn(make_batch(order, first, count, epoch));
    }
  }

 private:
  const DatasetManifest& manifest_;
  std::vector<const PersonInstance*> items_;
  PreprocessConfig cfg_;
  bool augment_;
  uint64_t base_seed_;
  int num_workers_;
  ImageStore store_;
};

}  // namespace artgest::data
