#include "mmfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace mmfuse {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic spec: n_classes must be >= 2");
  if (task == Task::emotion && n_classes != 2) throw ConfigError("synthetic spec: emotion task is binary");
  if (task == Task::gesture && n_classes > kGestureClasses)
    throw ConfigError("synthetic spec: gesture task supports at most 32 classes");
  if (n_samples < 1) throw ConfigError("synthetic spec: n_samples must be >= 1");
  if (min_length < 1 || max_length < min_length) throw ConfigError("synthetic spec: invalid length range");
  if (rho < 0.0 || rho > 1.0) throw ConfigError("synthetic spec: rho must be in [0, 1]");
  if (noise < 0.0) throw ConfigError("synthetic spec: noise must be >= 0");
  if (salient_fraction <= 0.0 || salient_fraction > 1.0)
    throw ConfigError("synthetic spec: salient_fraction must be in (0, 1]");
  for (const auto& [tag, d] : dims)
    if (d < 1) throw ConfigError("synthetic spec: dimension of " + std::string(to_string(tag)) + " must be >= 1");
  if (!class_proportions.empty() && static_cast<int>(class_proportions.size()) != n_classes)
    throw ConfigError("synthetic spec: class_proportions must have n_classes entries");
  if (!class_proportions.empty()) {
    double total = 0.0;
    for (double p : class_proportions) {
      if (!(p >= 0.0)) throw ConfigError("synthetic spec: class_proportions must be >= 0");
      total += p;
    }
    if (!(total > 0.0)) throw ConfigError("synthetic spec: class_proportions must not all be zero");
    // Every class receives at least one sample.
    if (n_samples < n_classes) throw ConfigError("synthetic spec: class_proportions need n_samples >= n_classes");
  }
}

std::map<Modality, int> SyntheticSpec::resolved_dims() const {
  if (!dims.empty()) return dims;
  if (task == Task::gesture) return {{Modality::rgb, 768}, {Modality::pose, 256}};
  return {{Modality::ctx, 768}, {Modality::face, 512}};
}

namespace {

RowVec random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowVec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v / v.norm();
}

std::vector<int> draw_labels(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::vector<int> labels(static_cast<std::size_t>(spec.n_samples));
  if (spec.class_proportions.empty()) {
    for (int i = 0; i < spec.n_samples; ++i) labels[static_cast<std::size_t>(i)] = i % spec.n_classes;
    return labels;
  }
  // Deterministic largest-remainder allocation; a class left empty takes
  // one sample from the largest class so every class is present.
  double total = 0.0;
  for (double p : spec.class_proportions) total += p;
  std::vector<int> counts(static_cast<std::size_t>(spec.n_classes), 0);
  int assigned = 0;
  std::vector<std::pair<double, int>> rem;
  for (int c = 0; c < spec.n_classes; ++c) {
    double exact = spec.class_proportions[static_cast<std::size_t>(c)] / total * spec.n_samples;
    int whole = static_cast<int>(std::floor(exact));
    counts[static_cast<std::size_t>(c)] = whole;
    assigned += whole;
    rem.emplace_back(exact - whole, c);
  }
  std::sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  for (std::size_t i = 0; assigned < spec.n_samples; ++i, ++assigned) counts[static_cast<std::size_t>(rem[i % rem.size()].second)]++;
  for (auto& c : counts)
    if (c == 0) {
      --*std::max_element(counts.begin(), counts.end());
      c = 1;
    }
  std::size_t k = 0;
  for (int c = 0; c < spec.n_classes; ++c)
    for (int j = 0; j < counts[static_cast<std::size_t>(c)]; ++j) labels[k++] = c;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

}  // namespace

std::vector<SampleRecord> generate_synthetic_samples(const SyntheticSpec& spec) {
  spec.validate();
  const auto dims = spec.resolved_dims();
  std::mt19937_64 rng(spec.seed);

  std::map<Modality, std::vector<RowVec>> directions;
  for (const auto& [tag, d] : dims) {
    RowVec axis = random_unit(d, rng);
    auto& dirs = directions[tag];
    for (int c = 0; c < spec.n_classes; ++c) {
      RowVec u = spec.activity_axis * axis + random_unit(d, rng);
      dirs.push_back(u / u.norm());
    }
  }

  const std::vector<int> labels = draw_labels(spec, rng);
  std::uniform_int_distribution<int> len_dist(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> other_class(0, spec.n_classes - 2);
  std::bernoulli_distribution salient(spec.salient_fraction);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<SampleRecord> samples;
  samples.reserve(static_cast<std::size_t>(spec.n_samples));
  const int width = static_cast<int>(std::to_string(spec.n_samples).size());
  for (int i = 0; i < spec.n_samples; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    int d = other_class(rng);
    if (d >= y) ++d;
    const int T = len_dist(rng);
    std::vector<bool> active(static_cast<std::size_t>(T));
    bool any = false;
    for (int t = 0; t < T; ++t) any |= (active[static_cast<std::size_t>(t)] = salient(rng));
    if (!any) active[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, T - 1)(rng))] = true;

    SampleRecord s;
    std::ostringstream id;
    id << "s" << std::setw(width) << std::setfill('0') << i;
    s.id = id.str();
    s.label = y;
    for (const auto& [tag, dim] : dims) {
      const auto& dirs = directions[tag];
      EmbeddingSequence seq;
      seq.modality = tag;
      seq.data = Mat::Zero(T, dim);
      seq.mask = full_mask(T);
      for (int t = 0; t < T; ++t) {
        const double amp = spec.signal * (1.0 + spec.jitter * gauss(rng));
        if (active[static_cast<std::size_t>(t)]) {
          seq.data.row(t) = amp * dirs[static_cast<std::size_t>(y)];
        } else {
          seq.data.row(t) = (1.0 - spec.rho) * amp * dirs[static_cast<std::size_t>(d)];
        }
        if (spec.noise > 0.0)
          for (int k = 0; k < dim; ++k) seq.data(t, k) += spec.noise * gauss(rng);
      }
      // Round through f32 so in-memory samples equal what is written to disk.
      seq.data = seq.data.cast<float>().cast<double>();
      s.streams.emplace(tag, std::move(seq));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

Manifest generate_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
  auto samples = generate_synthetic_samples(spec);
  const fs::path dir = fs::absolute(out_dir);
  fs::create_directories(dir / "streams");
  Manifest m;
  for (const auto& s : samples) {
    ManifestEntry e;
    e.id = s.id;
    e.label = s.label;
    e.length = static_cast<int>(s.length());
    for (const auto& [tag, seq] : s.streams) {
      fs::path p = dir / "streams" / (s.id + "." + std::string(to_string(tag)) + ".f32");
      write_embedding_file(p, seq);
      e.streams.emplace(tag, p);
    }
    m.entries.push_back(std::move(e));
  }
  save_manifest(dir / "manifest.jsonl", m);
  return m;
}

namespace {

RowVec mean_feature(const SampleRecord& s) {
  Eigen::Index total = 0;
  for (const auto& [tag, seq] : s.streams) total += seq.dim();
  RowVec f(total);
  Eigen::Index off = 0;
  for (const auto& [tag, seq] : s.streams) {
    RowVec m = RowVec::Zero(seq.dim());
    for (Eigen::Index t = 0; t < seq.length(); ++t)
      if (seq.mask[static_cast<std::size_t>(t)]) m += seq.data.row(t);
    // Unit-normalised so the oracle ignores how many steps were salient.
    const double norm = m.norm();
    f.segment(off, seq.dim()) = norm > 0.0 ? RowVec(m / norm) : m;
    off += seq.dim();
  }
  return f;
}

}  // namespace

double nearest_centroid_accuracy(const std::vector<SampleRecord>& samples, int n_classes) {
  if (samples.empty()) return 0.0;
  std::vector<RowVec> feats;
  for (const auto& s : samples) feats.push_back(mean_feature(s));
  const Eigen::Index dim = feats.front().size();
  std::vector<RowVec> centroids(static_cast<std::size_t>(n_classes), RowVec::Zero(dim));
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    centroids[static_cast<std::size_t>(samples[i].label)] += feats[i];
    counts[static_cast<std::size_t>(samples[i].label)]++;
  }
  for (int c = 0; c < n_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) centroids[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
  int correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_classes; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;
      double dist = (feats[i] - centroids[static_cast<std::size_t>(c)]).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    correct += best == samples[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace mmfuse
