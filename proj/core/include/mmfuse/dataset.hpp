#pragma once

// Samples, manifests, padded batches and the sampling strategies used by the
// training loop.

#include "mmfuse/embedding_io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmfuse {

inline constexpr int kGestureClasses = 32;
inline constexpr int kRawNonGestureLabel = 99;
inline constexpr int kNonGestureIndex = 31;

// Raw 99 (non-gesture) -> 31; 0..31 pass through; anything else throws.
int canonicalize_gesture_label(int raw);

struct SampleRecord {
  std::string id;
  std::map<Modality, EmbeddingSequence> streams;
  int label = 0;

  Eigen::Index length() const;
  // All streams share T and mask; throws ShapeError otherwise.
  void validate() const;
};

struct ManifestEntry {
  std::string id;
  int label = 0;
  std::optional<int> raw_label;  // set when canonicalisation changed it
  int length = 0;
  std::map<Modality, std::filesystem::path> streams;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<int> labels() const;
  std::vector<int> lengths() const;
  std::size_t size() const { return entries.size(); }
  Manifest subset(const std::vector<std::size_t>& indices) const;
};

// JSON lines: {"id","label","len","streams":{tag:path}} plus optional
// "raw_label". Relative stream paths resolve against the manifest directory.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
// With gesture_labels=true, raw labels are canonicalised on ingestion.
Manifest load_manifest(const std::filesystem::path& path, bool gesture_labels = false);

// Reads every stream of an entry; checks the on-disk lengths match "len".
SampleRecord load_sample(const ManifestEntry& entry);
std::vector<SampleRecord> load_samples(const Manifest& manifest);

struct PaddedBatch {
  // Per modality, B matrices of shape T_max x D.
  std::map<Modality, std::vector<Mat>> data;
  std::vector<Mask> mask;  // B masks of length T_max
  std::vector<int> labels;
  std::vector<int> lengths;

  std::size_t size() const { return labels.size(); }
  Eigen::Index max_length() const;
  const std::vector<Mat>& stream(Modality m) const;
};

PaddedBatch pad_and_mask_batch(const std::vector<const SampleRecord*>& samples);
PaddedBatch pad_and_mask_batch(const std::vector<SampleRecord>& samples);

using IndexBatch = std::vector<std::size_t>;

// Groups indices into length-quantile buckets, shuffles inside each bucket
// and emits batches that never cross a bucket. Every index appears once.
std::vector<IndexBatch> bucket_batches(const std::vector<int>& lengths, int batch_size, int n_buckets,
                                       std::uint64_t seed);
std::vector<IndexBatch> bucket_batches(const Manifest& manifest, int batch_size, int n_buckets,
                                       std::uint64_t seed);

// Sum over batches of (T_max - T) for every member.
long long padding_waste(const std::vector<int>& lengths, const std::vector<IndexBatch>& batches);

// Draws with replacement such that every class present in `labels` is
// chosen with equal probability, then a sample uniformly within the class.
std::vector<std::size_t> balanced_sample_indices(const std::vector<int>& labels, int n_classes,
                                                 std::size_t n_draws, std::uint64_t seed);

// weight_c proportional to 1/count_c, rescaled to mean 1 over the classes
// present; absent classes get 0.
std::vector<double> compute_class_weights(const std::vector<int>& labels, int n_classes);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Per-class deterministic split; each class keeps at least one train item.
Split stratified_split(const std::vector<int>& labels, double val_fraction, std::uint64_t seed);

// Moves up to `count` items of class `cls` from train to val (deterministic
// for the seed). Used to rebalance a validation set lacking a class.
Split move_to_validation(const Split& split, const std::vector<int>& labels, int cls, std::size_t count,
                         std::uint64_t seed);

}  // namespace mmfuse
