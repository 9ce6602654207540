#include "mmfuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mmfuse {

Eigen::Index PaddedBatch::max_length() const { return mask.empty() ? 0 : static_cast<Eigen::Index>(mask.front().size()); }

const std::vector<Mat>& PaddedBatch::stream(Modality m) const {
  auto it = data.find(m);
  if (it == data.end()) throw ShapeError("batch has no " + std::string(to_string(m)) + " stream");
  return it->second;
}

PaddedBatch pad_and_mask_batch(const std::vector<const SampleRecord*>& samples) {
  if (samples.empty()) throw ShapeError("pad_and_mask_batch: empty batch");
  PaddedBatch b;
  Eigen::Index t_max = 0;
  for (const auto* s : samples) t_max = std::max(t_max, s->length());

  std::map<Modality, Eigen::Index> dims;
  for (const auto& [tag, seq] : samples.front()->streams) dims[tag] = seq.dim();

  for (const auto* s : samples) {
    if (s->streams.size() != dims.size())
      throw ShapeError("pad_and_mask_batch: sample " + s->id + " has a different set of streams");
    const Eigen::Index len = s->length();
    for (const auto& [tag, seq] : s->streams) {
      auto d = dims.find(tag);
      if (d == dims.end() || d->second != seq.dim())
        throw ShapeError("pad_and_mask_batch: inconsistent " + std::string(to_string(tag)) + " dimension in sample " +
                         s->id);
      Mat padded = Mat::Zero(t_max, seq.dim());
      padded.topRows(len) = seq.data;
      b.data[tag].push_back(std::move(padded));
    }
    Mask m(static_cast<std::size_t>(t_max), 0);
    const Mask& src = s->streams.begin()->second.mask;
    std::copy(src.begin(), src.end(), m.begin());
    b.mask.push_back(std::move(m));
    b.labels.push_back(s->label);
    b.lengths.push_back(static_cast<int>(len));
  }
  return b;
}

PaddedBatch pad_and_mask_batch(const std::vector<SampleRecord>& samples) {
  std::vector<const SampleRecord*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return pad_and_mask_batch(ptrs);
}

std::vector<IndexBatch> bucket_batches(const std::vector<int>& lengths, int batch_size, int n_buckets,
                                       std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n_buckets < 1) throw ConfigError("n_buckets must be >= 1");
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });

  const std::size_t n = order.size();
  const auto buckets = static_cast<std::size_t>(n_buckets);
  std::vector<IndexBatch> batches;
  for (std::size_t k = 0; k < buckets; ++k) {
    const std::size_t lo = k * n / buckets;
    const std::size_t hi = (k + 1) * n / buckets;
    std::vector<std::size_t> bucket(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                    order.begin() + static_cast<std::ptrdiff_t>(hi));
    std::shuffle(bucket.begin(), bucket.end(), rng);
    for (std::size_t i = 0; i < bucket.size(); i += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(bucket.size(), i + static_cast<std::size_t>(batch_size));
      batches.emplace_back(bucket.begin() + static_cast<std::ptrdiff_t>(i),
                           bucket.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::vector<IndexBatch> bucket_batches(const Manifest& manifest, int batch_size, int n_buckets, std::uint64_t seed) {
  return bucket_batches(manifest.lengths(), batch_size, n_buckets, seed);
}

long long padding_waste(const std::vector<int>& lengths, const std::vector<IndexBatch>& batches) {
  long long waste = 0;
  for (const auto& b : batches) {
    int t_max = 0;
    for (auto i : b) t_max = std::max(t_max, lengths[i]);
    for (auto i : b) waste += t_max - lengths[i];
  }
  return waste;
}

namespace {

std::vector<std::vector<std::size_t>> group_by_class(const std::vector<int>& labels, int n_classes) {
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw ConfigError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(n_classes) + ")");
    groups[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return groups;
}

}  // namespace

std::vector<std::size_t> balanced_sample_indices(const std::vector<int>& labels, int n_classes, std::size_t n_draws,
                                                 std::uint64_t seed) {
  auto groups = group_by_class(labels, n_classes);
  // Classes without samples are skipped; the rest are equally likely.
  std::erase_if(groups, [](const auto& g) { return g.empty(); });
  std::vector<std::size_t> out;
  if (n_draws == 0) return out;
  if (groups.empty()) throw ConfigError("balanced sampling needs at least one labelled sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_class(0, groups.size() - 1);
  out.reserve(n_draws);
  for (std::size_t i = 0; i < n_draws; ++i) {
    const auto& g = groups[pick_class(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    out.push_back(g[pick(rng)]);
  }
  return out;
}

std::vector<double> compute_class_weights(const std::vector<int>& labels, int n_classes) {
  auto groups = group_by_class(labels, n_classes);
  // Absent classes get weight 0; the mean over present classes is 1.
  std::vector<double> w(static_cast<std::size_t>(n_classes), 0.0);
  double total = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (groups[c].empty()) continue;
    w[c] = 1.0 / static_cast<double>(groups[c].size());
    total += w[c];
    ++present;
  }
  if (present == 0) throw ConfigError("class weights need at least one labelled sample");
  const double mean = total / static_cast<double>(present);
  for (auto& x : w) x /= mean;
  return w;
}

Split stratified_split(const std::vector<int>& labels, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must be in [0, 1)");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [cls, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    n_val = std::min(n_val, idx.size() - 1);
    s.val.insert(s.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

Split move_to_validation(const Split& split, const std::vector<int>& labels, int cls, std::size_t count,
                         std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (auto i : split.train)
    if (labels.at(i) == cls) candidates.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(std::min(count, candidates.size()));
  std::sort(candidates.begin(), candidates.end());

  Split out;
  out.val = split.val;
  out.val.insert(out.val.end(), candidates.begin(), candidates.end());
  std::sort(out.val.begin(), out.val.end());
  for (auto i : split.train)
    if (!std::binary_search(candidates.begin(), candidates.end(), i)) out.train.push_back(i);
  return out;
}

}  // namespace mmfuse
