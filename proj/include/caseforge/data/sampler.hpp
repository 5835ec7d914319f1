#pragma once

#include <functional>
#include <map>
#include <vector>

#include "caseforge/data/dataset.hpp"
#include "caseforge/data/grayscale.hpp"

namespace caseforge {

// One training batch: aligned RGB / grayscale / pose-varied-RGB triads plus
// in-batch triplet structure. x_gray[i] is exactly to_grayscale(x_rgb[i]);
// x_rgb_prime[i] shares the identity of x_rgb[i] but differs in (pose, view)
// whenever the identity has more than one.
struct TrainingBatch {
  Tensor<float> x_rgb;        // (B, H, W, 3)
  Tensor<float> x_gray;       // (B, H, W, 3)
  Tensor<float> x_rgb_prime;  // (B, H, W, 3)
  std::vector<int> labels;    // class indices over train identities
  std::vector<int64_t> pos_idx, neg_idx;
};

// P identities x K instances per batch, so every anchor has an in-batch
// positive and negative.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, int p, int k,
               std::function<void(const std::string&)> warn = nullptr)
      : ds_(&ds), p_(p), k_(k), warn_(std::move(warn)) {
    require(k_ >= 2, Errc::config_invalid, "sampler: K must be >= 2 for in-batch positives");
    require(p_ >= 2, Errc::config_invalid, "sampler: P must be >= 2 for in-batch negatives");
    require(!ds.train_idx.empty(), Errc::empty_split, "sampler: train split is empty");
    std::map<int, std::vector<int64_t>> by_id;
    for (int64_t idx : ds.train_idx) by_id[ds.manifest.samples[static_cast<size_t>(idx)].identity_id].push_back(idx);
    require(by_id.size() >= 2, Errc::single_identity,
            "sampler: need at least 2 train identities, got " + std::to_string(by_id.size()));
    for (auto& [id, list] : by_id) {
      class_of_[id] = static_cast<int>(groups_.size());
      groups_.push_back(std::move(list));
    }
  }

  int num_classes() const { return static_cast<int>(groups_.size()); }
  int batch_size() const { return p_ * k_; }

  // Class index for a manifest identity (train identities only).
  int class_index(int identity_id) const {
    auto it = class_of_.find(identity_id);
    require(it != class_of_.end(), Errc::invalid_argument,
            "identity " + std::to_string(identity_id) + " is not a train identity");
    return it->second;
  }

  TrainingBatch next(Rng& rng) {
    const int p_eff = std::min<int>(p_, static_cast<int>(groups_.size()));
    std::vector<int> group_ids(groups_.size());
    for (size_t i = 0; i < groups_.size(); ++i) group_ids[i] = static_cast<int>(i);
    rng.shuffle(group_ids.begin(), group_ids.end());
    group_ids.resize(static_cast<size_t>(p_eff));

    const auto& cfg = ds_->manifest.config;
    const int b = p_eff * k_;
    TrainingBatch batch;
    batch.x_rgb = Tensor<float>({b, cfg.image_h, cfg.image_w, 3});
    batch.x_rgb_prime = Tensor<float>({b, cfg.image_h, cfg.image_w, 3});
    batch.labels.resize(static_cast<size_t>(b));
    batch.pos_idx.resize(static_cast<size_t>(b));
    batch.neg_idx.resize(static_cast<size_t>(b));

    std::vector<int64_t> chosen(static_cast<size_t>(b));
    for (int gi = 0; gi < p_eff; ++gi) {
      const auto& pool = groups_[static_cast<size_t>(group_ids[static_cast<size_t>(gi)])];
      std::vector<int64_t> picks;
      if (static_cast<int>(pool.size()) >= k_) {
        std::vector<int64_t> shuffled = pool;
        rng.shuffle(shuffled.begin(), shuffled.end());
        picks.assign(shuffled.begin(), shuffled.begin() + k_);
      } else {
        if (warn_ && !warned_replacement_) {
          warned_replacement_ = true;
          warn_("identity has fewer than K samples; sampling with replacement");
        }
        for (int j = 0; j < k_; ++j)
          picks.push_back(pool[rng.uniform_int(pool.size())]);
      }
      for (int j = 0; j < k_; ++j) {
        const int row = gi * k_ + j;
        chosen[static_cast<size_t>(row)] = picks[static_cast<size_t>(j)];
        batch.labels[static_cast<size_t>(row)] = group_ids[static_cast<size_t>(gi)];
      }
    }

    const int64_t img_elems = static_cast<int64_t>(cfg.image_h) * cfg.image_w * 3;
    for (int row = 0; row < b; ++row) {
      const int64_t src = chosen[static_cast<size_t>(row)];
      std::copy_n(ds_->images[static_cast<size_t>(src)].data(), img_elems,
                  batch.x_rgb.data() + row * img_elems);
      const int64_t alt = sample_pose_pair(src, rng);
      std::copy_n(ds_->images[static_cast<size_t>(alt)].data(), img_elems,
                  batch.x_rgb_prime.data() + row * img_elems);
    }
    batch.x_gray = to_grayscale_batch(batch.x_rgb);

    for (int row = 0; row < b; ++row) {
      const int gi = row / k_;
      int other = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k_ - 1)));
      if (other >= row % k_) ++other;
      batch.pos_idx[static_cast<size_t>(row)] = gi * k_ + other;
      int neg_block = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(p_eff - 1)));
      if (neg_block >= gi) ++neg_block;
      batch.neg_idx[static_cast<size_t>(row)] =
          neg_block * k_ + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k_)));
    }
    return batch;
  }

 private:
  // Another sample of the same identity with a different (pose, view); the
  // anchor itself when no alternative exists.
  int64_t sample_pose_pair(int64_t anchor_idx, Rng& rng) {
    const auto& anchor = ds_->manifest.samples[static_cast<size_t>(anchor_idx)];
    const auto& pool = groups_[static_cast<size_t>(class_of_.at(anchor.identity_id))];
    std::vector<int64_t> candidates;
    for (int64_t idx : pool) {
      const auto& s = ds_->manifest.samples[static_cast<size_t>(idx)];
      if (s.pose_id != anchor.pose_id || s.view_id != anchor.view_id) candidates.push_back(idx);
    }
    if (candidates.empty()) return anchor_idx;
    return candidates[rng.uniform_int(candidates.size())];
  }

  const Dataset* ds_;
  int p_, k_;
  std::function<void(const std::string&)> warn_;
  bool warned_replacement_ = false;
  std::vector<std::vector<int64_t>> groups_;  // class index -> sample indices
  std::map<int, int> class_of_;               // identity_id -> class index
};

}  // namespace caseforge
