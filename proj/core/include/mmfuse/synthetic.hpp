#pragma once

// Synthetic stand-in for precomputed backbone embeddings.
//
// Every class owns a unit direction per modality (a shared "activity" axis
// plus a class-specific part). A sample of class y is a sequence of length T
// in which a random subset of steps, common to all modalities, is salient and
// carries signal * u[y]; the remaining steps carry a per-sample distractor
// class d != y at amplitude (1 - rho) * signal. rho therefore sets how much
// of each stream is consistent class evidence: rho = 1 leaves only the true
// class, rho = 0 makes the background as loud as the salient steps. Each step
// has multiplicative jitter and additive Gaussian noise.

#include "mmfuse/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace mmfuse {

struct SyntheticSpec {
  Task task = Task::gesture;
  int n_classes = 8;
  int n_samples = 100;
  int min_length = 8;
  int max_length = 16;
  std::map<Modality, int> dims;  // empty -> task defaults
  double rho = 0.6;
  double noise = 0.3;
  std::uint64_t seed = 0;
  double signal = 1.0;
  double salient_fraction = 0.3;
  double jitter = 0.05;
  double activity_axis = 1.0;
  // Optional relative class frequencies; empty -> labels cycle uniformly.
  std::vector<double> class_proportions;

  void validate() const;
  std::map<Modality, int> resolved_dims() const;
};

std::vector<SampleRecord> generate_synthetic_samples(const SyntheticSpec& spec);

// Writes one f32le file per stream under out_dir/streams and a manifest at
// out_dir/manifest.jsonl; returns the manifest (absolute stream paths).
Manifest generate_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// Fits class centroids of the unit-normalised per-stream temporal sums on
// `samples` and reports the fraction classified correctly by nearest centroid.
double nearest_centroid_accuracy(const std::vector<SampleRecord>& samples, int n_classes);

}  // namespace mmfuse
