#include "miup/dataset.hpp"

#include <sstream>
#include <stdexcept>

namespace miup {

void validate_dataset(const Dataset& data) {
  if (data.features.rows() != static_cast<Eigen::Index>(data.labels.size())) {
    throw std::invalid_argument("dataset: feature rows != label count");
  }
  if (data.features.cols() <= 0) {
    throw std::invalid_argument("dataset: feature dimension must be positive");
  }
  if (data.num_classes <= 0) {
    throw std::invalid_argument("dataset: num_classes must be positive");
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= data.num_classes) {
      std::ostringstream msg;
      msg << "dataset: label " << data.labels[i] << " at row " << i
          << " outside [0," << data.num_classes << ")";
      throw std::invalid_argument(msg.str());
    }
  }
  if (!data.features.allFinite()) {
    throw std::invalid_argument("dataset: non-finite feature value");
  }
}

Dataset subset(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.dim());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    out.labels.push_back(data.labels[rows[i]]);
  }
  out.num_classes = data.num_classes;
  out.source_tag = data.source_tag;
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("concat: feature dimension mismatch");
  }
  if (a.num_classes != b.num_classes) {
    throw std::invalid_argument("concat: class count mismatch");
  }
  Dataset out;
  out.features.resize(a.size() + b.size(), a.dim());
  out.features.topRows(a.size()) = a.features;
  out.features.bottomRows(b.size()) = b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.num_classes = a.num_classes;
  out.source_tag = a.source_tag;
  return out;
}

GaussianClassSampler::GaussianClassSampler(std::vector<GaussianClassSpec> classes)
    : classes_(std::move(classes)) {
  if (classes_.size() < 2) {
    throw std::invalid_argument("gaussian sampler: need >= 2 classes");
  }
  const Eigen::Index d = classes_.front().mean.size();
  for (const auto& c : classes_) {
    if (c.mean.size() != d) {
      throw std::invalid_argument("gaussian sampler: class mean dimension mismatch");
    }
    if (c.sigma < 0.0) {
      throw std::invalid_argument("gaussian sampler: sigma must be >= 0");
    }
  }
}

LabeledPoint GaussianClassSampler::sample(Rng& rng) const {
  const int k = static_cast<int>(rng.below(static_cast<std::int64_t>(classes_.size())));
  const auto& spec = classes_[static_cast<std::size_t>(k)];
  LabeledPoint p;
  p.x.resize(spec.mean.size());
  for (Eigen::Index j = 0; j < p.x.size(); ++j) {
    p.x[j] = spec.mean[j] + spec.sigma * rng.normal();
  }
  p.y = k;
  return p;
}

Dataset Sampler::draw(int n, std::uint64_t seed, const std::string& tag) const {
  return sample_dataset(*this, n, seed, tag);
}

PoolSampler::PoolSampler(Dataset pool) : pool_(std::move(pool)) {
  validate_dataset(pool_);
}

LabeledPoint PoolSampler::sample(Rng& rng) const {
  const auto row = static_cast<Eigen::Index>(rng.below(pool_.size()));
  return {pool_.features.row(row).transpose(),
          pool_.labels[static_cast<std::size_t>(row)]};
}

Dataset PoolSampler::draw(int n, std::uint64_t seed, const std::string& tag) const {
  if (n > pool_.size()) {
    throw std::invalid_argument("pool sampler: pool exhausted (" +
                                std::to_string(n) + " > " +
                                std::to_string(pool_.size()) + ")");
  }
  std::vector<int> order(static_cast<std::size_t>(pool_.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, streams::kSelect));
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(n));
  Dataset out = subset(pool_, order);
  out.source_tag = tag;
  return out;
}

MixtureSampler::MixtureSampler(MixtureSpec spec) : spec_(std::move(spec)) {
  if (!spec_.source || !spec_.target) {
    throw std::invalid_argument("mixture sampler: missing component");
  }
  if (spec_.alpha < 0.0 || spec_.alpha > 1.0) {
    throw std::invalid_argument("mixture sampler: alpha outside [0,1]");
  }
  if (spec_.source->dim() != spec_.target->dim() ||
      spec_.source->num_classes() != spec_.target->num_classes()) {
    throw std::invalid_argument("mixture sampler: incompatible components");
  }
}

LabeledPoint MixtureSampler::sample(Rng& rng) const {
  const bool take_target = rng.bernoulli(spec_.alpha);
  return take_target ? spec_.target->sample(rng) : spec_.source->sample(rng);
}

Dataset sample_dataset(const Sampler& sampler, int n, std::uint64_t seed,
                       const std::string& tag) {
  Dataset out;
  out.features.resize(n, sampler.dim());
  out.labels.resize(static_cast<std::size_t>(n));
  out.num_classes = sampler.num_classes();
  out.source_tag = tag;
  for (int i = 0; i < n; ++i) {
    Rng point_rng(derive_seed(seed, streams::kData, static_cast<std::uint64_t>(i)));
    LabeledPoint p = sampler.sample(point_rng);
    out.features.row(i) = p.x.transpose();
    out.labels[static_cast<std::size_t>(i)] = p.y;
  }
  return out;
}

Dataset synth_gaussian_classes(const std::vector<GaussianClassSpec>& classes,
                               std::uint64_t seed) {
  if (classes.size() < 2) {
    throw std::invalid_argument("synth_gaussian_classes: need >= 2 classes");
  }
  const Eigen::Index d = classes.front().mean.size();
  int total = 0;
  for (const auto& c : classes) {
    if (c.mean.size() != d) {
      throw std::invalid_argument("synth_gaussian_classes: class mean dimension mismatch");
    }
    if (c.samples_per_class <= 0) {
      throw std::invalid_argument("synth_gaussian_classes: samples_per_class must be positive");
    }
    total += c.samples_per_class;
  }
  Dataset out;
  out.features.resize(total, d);
  out.labels.reserve(static_cast<std::size_t>(total));
  out.num_classes = static_cast<int>(classes.size());
  out.source_tag = "synth_gaussian";
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    Rng class_rng(derive_seed(seed, streams::kData, k));
    for (int i = 0; i < classes[k].samples_per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < d; ++j) {
        out.features(row, j) = classes[k].mean[j] + classes[k].sigma * class_rng.normal();
      }
      out.labels.push_back(static_cast<int>(k));
    }
  }
  return out;
}

MixtureDraw mixture_sample_traced(const MixtureSpec& mix, int n, std::uint64_t seed) {
  if (!mix.source || !mix.target) {
    throw std::invalid_argument("mixture_sample: missing component sampler");
  }
  if (mix.alpha < 0.0 || mix.alpha > 1.0) {
    throw std::invalid_argument("mixture_sample: alpha outside [0,1]");
  }
  if (mix.source->dim() != mix.target->dim() ||
      mix.source->num_classes() != mix.target->num_classes()) {
    throw std::invalid_argument("mixture_sample: incompatible component samplers");
  }
  MixtureDraw out;
  out.data.features.resize(n, mix.source->dim());
  out.data.labels.resize(static_cast<std::size_t>(n));
  out.data.num_classes = mix.source->num_classes();
  out.data.source_tag = "mixture";
  out.from_target.resize(static_cast<std::size_t>(n));
  Rng select_rng(derive_seed(seed, streams::kSelect));
  for (int i = 0; i < n; ++i) {
    const bool take_target = select_rng.bernoulli(mix.alpha);
    Rng point_rng(derive_seed(seed, streams::kData, static_cast<std::uint64_t>(i)));
    LabeledPoint p = take_target ? mix.target->sample(point_rng)
                                 : mix.source->sample(point_rng);
    out.data.features.row(i) = p.x.transpose();
    out.data.labels[static_cast<std::size_t>(i)] = p.y;
    out.from_target[static_cast<std::size_t>(i)] = take_target ? 1 : 0;
  }
  return out;
}

Dataset mixture_sample(const MixtureSpec& mix, int n, std::uint64_t seed) {
  return mixture_sample_traced(mix, n, seed).data;
}

}  // namespace miup
