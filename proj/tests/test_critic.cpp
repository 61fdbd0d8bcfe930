#include <cmath>

#include "doctest.h"
#include "foresight/critic.hpp"
#include "foresight/dagger.hpp"
#include "oracles.hpp"

using namespace foresight;

namespace {

Observation random_observation(Rng& rng) {
  Observation o{};
  for (double& x : o) x = bernoulli(rng, 0.3) ? 1.0 : 0.0;
  return o;
}

CriticExample random_example(Rng& rng, double label) {
  return {random_observation(rng), random_observation(rng), random_observation(rng), label};
}

}  // namespace

TEST_CASE("zero critic predicts zero") {
  Rng rng(1);
  const auto m = CriticModel::zeros();
  for (int i = 0; i < 10; ++i) {
    const auto ex = random_example(rng, 0);
    CHECK(m.predict(ex.current, ex.future, ex.goal) == 0.0);
  }
  const std::vector<double> short_obs(3, 0.0);
  CHECK_THROWS(m.predict(short_obs, short_obs, short_obs));
}

TEST_CASE("critic gradient matches finite differences") {
  Rng rng(2);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    CriticModel m(5, point);
    for (auto& p : m.parameters())
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = 0.3 * standard_normal(rng);
    std::vector<CriticExample> batch;
    for (int b = 0; b < 4; ++b) batch.push_back(random_example(rng, standard_normal(rng) * 4));
    nn::Tensors grad;
    m.loss_and_gradient(batch, 10.0, grad);
    worst = std::max(worst, oracle::gradient_error(m.parameters(), grad, [&] { return m.loss(batch, 10.0); }));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("labels are clipped") {
  Rng rng(3);
  const auto m = CriticModel::zeros(4);
  std::vector<CriticExample> batch{random_example(rng, 25.0)};
  CHECK(m.loss(batch, 10.0) == doctest::Approx(100.0));
}

TEST_CASE("constant labels are learned") {
  Rng rng(4);
  std::vector<CriticExample> data;
  for (int i = 0; i < 500; ++i) data.push_back(random_example(rng, 2.5));
  CriticModel m(16, 1);
  CriticTrainOptions opt;
  opt.learning_rate = 1e-2;
  const auto report = m.train(data, opt);
  CHECK(report.best_validation_mse < 0.05);  // label square is 6.25
  CHECK(m.predict(data[0].current, data[0].future, data[0].goal) == doctest::Approx(2.5).epsilon(0.1));
}

TEST_CASE("identity pairs predict little progress") {
  // Expert pairs (s_t, s_t+k) labeled with the drop in goal distance, k = 0..5.
  std::vector<CriticExample> train, held_out;
  for (std::uint64_t seed = 0; seed < 260; ++seed) {
    const auto t = generate_task(seed, {4, 0.5, 0.4, 0.3});
    const Expert e(t);
    std::vector<PuzzleState> path{initial_state(t)};
    while (!is_goal(path.back(), t)) path.push_back(apply_action(path.back(), t, e.expert_action(path.back())));
    const Observation g = encode_goal(t);
    for (std::size_t i = 0; i < path.size(); ++i) {
      const Observation c = encode(path[i], t);
      if (seed >= 200) {
        held_out.push_back({c, c, g, 0.0});
        continue;
      }
      for (std::size_t k = 0; k <= 5 && i + k < path.size(); ++k)
        train.push_back({c, encode(path[i + k], t), g, static_cast<double>(k)});
    }
  }
  CriticModel m(64, 2);
  CriticTrainOptions opt;
  opt.learning_rate = 3e-3;
  m.train(train, opt);
  double err = 0.0, mean_label = 0.0;
  for (const auto& ex : held_out) err += std::abs(m.predict(ex.current, ex.future, ex.goal));
  for (const auto& ex : train) mean_label += ex.label;
  err /= static_cast<double>(held_out.size());
  mean_label /= static_cast<double>(train.size());
  CHECK(err < 0.5);
  CHECK(err < 0.25 * mean_label);
}

TEST_CASE("linear labels are recovered") {
  Rng rng(6);
  std::vector<CriticExample> data;
  for (int i = 0; i < 2000; ++i) {
    auto ex = random_example(rng, 0.0);
    ex.label = 3.0 * ex.future[17] - 1.0;
    data.push_back(ex);
  }
  CriticModel m(32, 3);
  CriticTrainOptions opt;
  opt.learning_rate = 3e-3;
  const auto report = m.train(data, opt);
  CHECK(report.best_validation_mse < 0.05);
}

TEST_CASE("training is reproducible") {
  Rng rng(7);
  std::vector<CriticExample> data;
  for (int i = 0; i < 100; ++i) data.push_back(random_example(rng, standard_normal(rng)));
  CriticModel a(8, 1), b(8, 1);
  CriticTrainOptions opt;
  opt.max_epochs = 5;
  const auto ra = a.train(data, opt);
  const auto rb = b.train(data, opt);
  CHECK(ra.validation_mse == rb.validation_mse);
  CHECK(a.parameters() == b.parameters());
  CHECK(ra.train_size + ra.validation_size == data.size());
  CHECK(ra.validation_size == 10);
  std::vector<CriticExample> tiny(data.begin(), data.begin() + 5);
  CHECK_THROWS(a.train(tiny, opt));
}

TEST_CASE("critic beats the constant predictor on interactive data") {
  PolicyModel policy(PolicyShape{}, 1);
  RelabeledData all;
  Rng rng(8);
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const Expert e(generate_task(seed, {4, 0.5, 0.4, 0.3}));
    RolloutOptions ro;
    ro.mix = 0.5;
    all.append(relabel(rollout(policy, e, ro, rng), 5));
  }
  REQUIRE(all.critic.size() > 200);
  CriticModel m(64, 4);
  CriticTrainOptions opt;
  const auto report = m.train(all.critic, opt);
  CHECK(report.best_validation_mse < report.validation_label_variance);
}

TEST_CASE("oracle critic") {
  const auto t = generate_task(9, {4, 0.5, 0.4, 0.5});
  const Expert e(t);
  const OracleCritic oc(e);
  const PuzzleState s = initial_state(t);
  CHECK(oc.oracle_advantage(s, s) == 0);

  PuzzleState cur = s;
  for (int k = 0; k < 5 && !is_goal(cur, t); ++k) cur = apply_action(cur, t, e.expert_action(cur));
  CHECK(oc.oracle_advantage(s, cur) == std::min(5, e.goal_distance(s)));

  const Observation o = encode(s, t), g = encode_goal(t), f = encode(cur, t);
  const CriticQuery q{o, f, g, s, cur};
  CHECK(oc.estimate(q) == oc.oracle_advantage(s, cur));

  // Removing a placed piece moves away from the goal.
  const PuzzleState done = goal_state(t);
  for (int p = 0; p < 4; ++p) {
    const Action lift{Verb::kPickUp, p};
    if (is_valid(done, t, lift)) CHECK(oc.oracle_advantage(done, apply_action(done, t, lift)) == -1);
  }
}
