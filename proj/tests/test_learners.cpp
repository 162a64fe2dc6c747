#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "miup/dataset.hpp"
#include "miup/model.hpp"
#include "miup/stats.hpp"
#include "miup/train.hpp"

using namespace miup;

namespace {

GaussianClassSpec make_class(std::vector<double> mean, double sigma, int count) {
  GaussianClassSpec spec;
  spec.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                static_cast<Eigen::Index>(mean.size()));
  spec.sigma = sigma;
  spec.samples_per_class = count;
  return spec;
}

Model random_model(const ArchDescriptor& arch, std::uint64_t seed, double scale) {
  Model model = init_model(arch, seed);
  Rng rng(seed + 17);
  for (auto& w : model.weights) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) += scale * rng.normal();
    }
  }
  for (auto& b : model.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] += scale * rng.normal();
  }
  return model;
}

double max_param_delta(const Model& a, const Model& b) {
  double out = 0.0;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    out = std::max(out, (a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff());
    out = std::max(out, (a.biases[l] - b.biases[l]).cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace

TEST_CASE("separable two-class problem trains past 95% accuracy") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 0.0}, 0.5, 100), make_class({3.0, 3.0}, 0.5, 100)}, 21);

  // Separating-hyperplane oracle: the perpendicular bisector of the class
  // means must already classify the draw almost perfectly, so a trained
  // logistic model has to match it.
  const Eigen::Vector2d m0(0.0, 0.0), m1(3.0, 3.0);
  const Eigen::Vector2d w = m1 - m0;
  const double bias = -w.dot((m0 + m1) / 2.0);
  int oracle_correct = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double side = w.dot(data.features.row(i).transpose()) + bias;
    const int predicted = side > 0 ? 1 : 0;
    oracle_correct += predicted == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  REQUIRE(oracle_correct >= 190);

  const Model model = train_initial({2, {}, 2}, {0.01, 32, 50, 3}, data);
  CHECK(accuracy(model, data) >= 0.95);

  // Initial training must beat the at-initialization loss.
  const Model fresh = init_model({2, {}, 2}, 3);
  CHECK(mean_loss(model, data) < mean_loss(fresh, data));
}

TEST_CASE("training is deterministic in the seed") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 1.0}, 1.0, 40), make_class({2.0, -1.0}, 1.0, 40)}, 5);
  const Model a = train_initial({2, {}, 2}, {0.05, 16, 5, 11}, data);
  const Model b = train_initial({2, {}, 2}, {0.05, 16, 5, 11}, data);
  CHECK(max_param_delta(a, b) == 0.0);
  const Model c = train_initial({2, {}, 2}, {0.05, 16, 5, 12}, data);
  CHECK(max_param_delta(a, c) > 0.0);
}

TEST_CASE("config invariants rejected") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0}, 1.0, 4), make_class({1.0}, 1.0, 4)}, 5);
  CHECK_THROWS_AS(train_initial({1, {}, 2}, {0.05, 16, 0, 11}, data),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_initial({1, {}, 2}, {0.0, 16, 1, 11}, data),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_initial({1, {}, 2}, {0.05, 0, 1, 11}, data),
                  std::invalid_argument);
}

TEST_CASE("sgd_step: zero rate is a no-op, batches average") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 1.0}, 1.0, 10), make_class({2.0, -1.0}, 1.0, 10)}, 8);
  const Model model = random_model({2, {}, 2}, 1, 0.3);

  CHECK(max_param_delta(sgd_step(model, data, {0, 1, 2}, 0.0), model) == 0.0);

  // A point repeated twice equals the same point once (mean over batch).
  const Model once = sgd_step(model, data, {3}, 0.1);
  const Model twice = sgd_step(model, data, {3, 3}, 0.1);
  CHECK(max_param_delta(once, twice) < 1e-15);

  CHECK_THROWS_AS(sgd_step(model, data, {}, 0.1), std::invalid_argument);
}

TEST_CASE("sgd_step matches the closed-form softmax gradient on one point") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.5, -0.25}, 1.0, 2), make_class({1.0, 2.0}, 1.0, 2)}, 30);
  const Model model = random_model({2, {}, 2}, 2, 0.5);
  const double eta = 0.2;
  const int idx = 1;
  const Eigen::VectorXd x = data.features.row(idx).transpose();
  const int y = data.labels[idx];

  // d/dW of -log softmax(Wx+b)_y  =  (p - e_y) x^T,  d/db = (p - e_y).
  Eigen::VectorXd delta = predict_proba(model, x);
  delta[y] -= 1.0;
  const Eigen::MatrixXd expected_w = model.weights[0] - eta * delta * x.transpose();
  const Eigen::VectorXd expected_b = model.biases[0] - eta * delta;

  const Model stepped = sgd_step(model, data, {idx}, eta);
  CHECK((stepped.weights[0] - expected_w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((stepped.biases[0] - expected_b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients match central finite differences") {
  const Dataset data = synth_gaussian_classes({make_class({0.2, -0.4, 0.6, 0.1}, 1.0, 6),
                                               make_class({-0.3, 0.5, -0.2, 0.4}, 1.0, 6),
                                               make_class({0.9, 0.0, 0.3, -0.6}, 1.0, 6)},
                                              14);
  Model model = random_model({4, {5}, 3}, 9, 0.4);
  const std::vector<int> batch = {0, 5, 11, 16};
  const Gradients grads = batch_gradient(model, data, batch);

  const double step = 1e-5;
  double worst_rel = 0.0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
        Model plus = model;
        Model minus = model;
        plus.weights[l](i, j) += step;
        minus.weights[l](i, j) -= step;
        const double numeric =
            (mean_loss(plus, data, batch) - mean_loss(minus, data, batch)) / (2 * step);
        const double analytic = grads.weights[l](i, j);
        const double rel = std::abs(numeric - analytic) /
                           std::max({std::abs(numeric), std::abs(analytic), 1e-3});
        worst_rel = std::max(worst_rel, rel);
      }
    }
  }
  CHECK(worst_rel <= 1e-4);
}

TEST_CASE("softmax output: normalization, uniformity, shift invariance") {
  const ArchDescriptor arch{3, {}, 4};
  const Model zero = init_model(arch, 0);
  const Eigen::Vector3d x(0.4, -1.0, 2.0);
  const Eigen::VectorXd p = predict_proba(zero, x);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25));

  Model shifted = random_model(arch, 33, 0.8);
  const Eigen::VectorXd before = predict_proba(shifted, x);
  CHECK(std::abs(before.sum() - 1.0) <= 1e-9);
  shifted.biases.back().array() += 7.5;  // adds a constant to every logit
  const Eigen::VectorXd after = predict_proba(shifted, x);
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = random_model({3, {4}, 5}, rng.engine()(), 1.0);
    Eigen::Vector3d point(rng.normal(), rng.normal(), rng.normal());
    CHECK(std::abs(predict_proba(m, point).sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("loss: perfect confidence, uniform prediction, bounds") {
  const ArchDescriptor arch{2, {}, 10};
  const Model zero = init_model(arch, 0);
  const Eigen::Vector2d x(1.0, -1.0);
  CHECK(loss(zero, x, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-9));

  Model confident = init_model({2, {}, 2}, 0);
  confident.biases[0][1] = 60.0;  // softmax saturates at class 1
  CHECK(loss(confident, x, 1) < 1e-12);
  CHECK(loss(confident, x, 0) >= 0.0);
  CHECK_THROWS_AS(loss(zero, x, 10), std::invalid_argument);
}

TEST_CASE("update strategies: bookkeeping and near-zero-rate no-op") {
  const Dataset d0 = synth_gaussian_classes(
      {make_class({0.0, 0.0}, 1.0, 60), make_class({2.5, 2.5}, 1.0, 60)}, 2);
  const GaussianClassSampler sampler(
      {make_class({0.0, 0.0}, 1.0, 0), make_class({2.5, 2.5}, 1.0, 0)});

  Model f0 = train_initial({2, {}, 2}, {0.01, 32, 20, 6}, d0);
  UpdateTrace trace = make_trace(f0, d0);
  UpdateStrategy sgd_new{UpdateKind::SGDNew, {1e-300, 8, 1, 7}};
  for (int i = 1; i <= 3; ++i) {
    update_model(trace, sample_dataset(sampler, 10, 100 + static_cast<std::uint64_t>(i)),
                 sgd_new);
  }
  CHECK(trace.k() == 3);
  CHECK(trace.models.size() == 4);
  CHECK(trace.update_sets.size() == 3);
  // At a vanishing learning rate the update leaves trained weights bitwise
  // unchanged.
  CHECK(max_param_delta(trace.models[1], trace.models[0]) == 0.0);

  UpdateStrategy sgd_full{UpdateKind::SGDFull, {0.01, 32, 2, 7}};
  UpdateTrace full_trace = make_trace(f0, d0);
  update_model(full_trace, sample_dataset(sampler, 10, 200), sgd_full);
  CHECK(full_trace.strategy_log.front() == UpdateKind::SGDFull);
  CHECK_THROWS_AS(update_model(full_trace, Dataset{}, sgd_full), std::invalid_argument);
}

TEST_CASE("training reports non-finite losses with the failing epoch") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 0.0}, 1.0, 20), make_class({4.0, 4.0}, 1.0, 20)}, 2);
  const Model f0 = train_initial({2, {}, 2}, {0.01, 32, 5, 6}, data);
  CHECK_THROWS_WITH_AS(train(f0, data, {1e308, 8, 3, 7}),
                       doctest::Contains("epoch"), std::runtime_error);
}

TEST_CASE("dp_sgd_step: inactive clipping plus zero noise equals sgd_step") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 1.0}, 1.0, 10), make_class({2.0, -1.0}, 1.0, 10)}, 12);
  const Model model = random_model({2, {}, 2}, 3, 0.3);
  const DPConfig dp{1e9, 0.0, 1e-4};
  const Model a = dp_sgd_step(model, data, {0, 4, 11}, 0.1, dp, 5);
  const Model b = sgd_step(model, data, {0, 4, 11}, 0.1);
  CHECK(max_param_delta(a, b) < 1e-14);
}

TEST_CASE("dp_sgd_step: active clipping caps the applied gradient norm") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 1.0}, 1.0, 10), make_class({2.0, -1.0}, 1.0, 10)}, 12);
  const Model model = random_model({2, {}, 2}, 4, 0.3);
  const Gradients raw = batch_gradient(model, data, {2});
  const double norm = std::sqrt(raw.squared_norm());
  REQUIRE(norm > 0.0);

  const double clip = norm / 2.0;  // gradient norm is exactly 2C
  const double eta = 1.0;
  const Model stepped = dp_sgd_step(model, data, {2}, eta, {clip, 0.0, 1e-4}, 5);
  double applied_sq = 0.0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    applied_sq += (stepped.weights[l] - model.weights[l]).squaredNorm();
    applied_sq += (stepped.biases[l] - model.biases[l]).squaredNorm();
  }
  CHECK(std::sqrt(applied_sq) == doctest::Approx(clip).epsilon(1e-10));
}

TEST_CASE("dp_sgd_step: noise standard deviation matches sigma*C/B") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 1.0}, 1.0, 4), make_class({2.0, -1.0}, 1.0, 4)}, 12);
  const Model model = random_model({2, {}, 2}, 5, 0.3);
  const DPConfig noiseless{0.5, 0.0, 1e-4};
  const DPConfig noisy{0.5, 1.0, 1e-4};
  const Model base = dp_sgd_step(model, data, {1}, 1.0, noiseless, 0);

  std::vector<double> samples;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Model perturbed = dp_sgd_step(model, data, {1}, 1.0, noisy, seed);
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      const Eigen::MatrixXd dw = perturbed.weights[l] - base.weights[l];
      for (Eigen::Index i = 0; i < dw.rows(); ++i) {
        for (Eigen::Index j = 0; j < dw.cols(); ++j) samples.push_back(dw(i, j));
      }
      const Eigen::VectorXd db = perturbed.biases[l] - base.biases[l];
      for (Eigen::Index i = 0; i < db.size(); ++i) samples.push_back(db[i]);
    }
  }
  // sigma * C / B = 1.0 * 0.5 / 1.
  CHECK(sample_std(samples) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(mean(samples)) < 0.01);
}

TEST_CASE("dp_train is deterministic and respects config validation") {
  const Dataset data = synth_gaussian_classes(
      {make_class({0.0, 1.0}, 1.0, 30), make_class({2.0, -1.0}, 1.0, 30)}, 12);
  const Model f0 = train_initial({2, {}, 2}, {0.01, 32, 5, 6}, data);
  const TrainConfig config{0.05, 16, 3, 77};
  const DPConfig dp{0.5, 1.0, 1e-4};
  const Model a = dp_train(f0, data, config, dp);
  const Model b = dp_train(f0, data, config, dp);
  CHECK(max_param_delta(a, b) == 0.0);
  CHECK_THROWS_AS(dp_train(f0, data, config, {0.0, 1.0, 1e-4}), std::invalid_argument);
  CHECK_THROWS_AS(dp_train(f0, data, config, {0.5, -1.0, 1e-4}), std::invalid_argument);
  CHECK_THROWS_AS(dp_train(f0, data, config, {0.5, 1.0, 1.5}), std::invalid_argument);
}

TEST_CASE("model checkpoints round-trip") {
  const Model model = random_model({3, {4}, 2}, 8, 0.6);
  const auto path =
      (std::filesystem::temp_directory_path() / "miup_model.json").string();
  save_model(model, path);
  const Model back = load_model(path);
  CHECK(back.arch == model.arch);
  CHECK(max_param_delta(back, model) == 0.0);
}
