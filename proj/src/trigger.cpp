#include "foresight/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace foresight {
namespace {
enum Param : int { kW1, kB1, kW2, kB2, kNumParams };
}

TriggerModel TriggerModel::zeros(int input, int hidden) {
  if (input < 1 || hidden < 1) throw std::invalid_argument("trigger dimensions must be positive");
  TriggerModel m{Empty{}};
  m.params_.assign(kNumParams, nn::Matrix());
  m.params_[kW1] = nn::Matrix::Zero(hidden, input);
  m.params_[kB1] = nn::Matrix::Zero(hidden, 1);
  m.params_[kW2] = nn::Matrix::Zero(1, hidden);
  m.params_[kB2] = nn::Matrix::Zero(1, 1);
  return m;
}

TriggerModel::TriggerModel(int input, int hidden, std::uint64_t seed) : TriggerModel(zeros(input, hidden)) {
  Rng rng(seed);
  params_[kW1] = nn::he_init(hidden, input, rng);
  params_[kW2] = nn::he_init(1, hidden, rng) * 0.1;
}

double TriggerModel::confidence(std::span<const double> hidden) const {
  if (static_cast<int>(hidden.size()) != input_size())
    throw std::invalid_argument("trigger input has the wrong length");
  const Eigen::Map<const nn::Vector> e(hidden.data(), static_cast<Eigen::Index>(hidden.size()));
  const nn::Vector h = (params_[kW1] * e + params_[kB1]).cwiseMax(0.0);
  return nn::sigmoid((params_[kW2] * h + params_[kB2])(0, 0));
}

double TriggerModel::loss(std::span<const TriggerExample> batch, double positive_weight) const {
  return evaluate(batch, positive_weight, nullptr);
}

double TriggerModel::loss_and_gradient(std::span<const TriggerExample> batch, double positive_weight,
                                       nn::Tensors& grad) const {
  return evaluate(batch, positive_weight, &grad);
}

double TriggerModel::evaluate(std::span<const TriggerExample> batch, double w, nn::Tensors* grad) const {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw std::invalid_argument("empty batch");
  const int in = input_size();
  nn::Matrix x(in, n);
  for (int b = 0; b < n; ++b) {
    if (static_cast<int>(batch[b].hidden.size()) != in) throw std::invalid_argument("trigger input has the wrong length");
    std::copy(batch[b].hidden.begin(), batch[b].hidden.end(), x.col(b).data());
  }
  const nn::Matrix z1 = (params_[kW1] * x).colwise() + params_[kB1].col(0);
  const nn::Matrix h = nn::relu(z1);
  const nn::Matrix z2 = (params_[kW2] * h).colwise() + params_[kB2].col(0);

  double total = 0.0;
  nn::Matrix dz2(1, n);
  for (int b = 0; b < n; ++b) {
    const double y = batch[b].label;
    const double z = z2(0, b);
    total += w * y * nn::log_sigmoid(z) + (1.0 - y) * nn::log_one_minus_sigmoid(z);
    // d/dz of -(w y log s + (1-y) log(1-s)) = -w y (1-s) + (1-y) s
    const double s = nn::sigmoid(z);
    dz2(0, b) = (-w * y * (1.0 - s) + (1.0 - y) * s) / n;
  }
  const double l = -total / n;
  if (grad == nullptr || !std::isfinite(l)) return l;

  grad->assign(kNumParams, nn::Matrix());
  (*grad)[kW2] = dz2 * h.transpose();
  (*grad)[kB2] = dz2.rowwise().sum();
  const nn::Matrix dz1 = (params_[kW2].transpose() * dz2).cwiseProduct(nn::relu_mask(z1));
  (*grad)[kW1] = dz1 * x.transpose();
  (*grad)[kB1] = dz1.rowwise().sum();
  return l;
}

double balancing_weight(std::span<const TriggerExample> data) {
  double n0 = 0, n1 = 0;
  for (const auto& ex : data) (ex.label == 1 ? n1 : n0) += 1.0;
  if (n0 == 0 || n1 == 0) throw std::invalid_argument("trigger data must contain both classes");
  return n0 / n1;
}

TriggerTrainReport TriggerModel::train(std::span<const TriggerExample> data, const TriggerTrainOptions& options) {
  bool has0 = false, has1 = false;
  for (const auto& ex : data) (ex.label == 1 ? has1 : has0) = true;
  if (!has0 || !has1) throw std::invalid_argument("trigger data must contain both classes");

  Rng rng(options.seed);
  const nn::Split split = nn::split_indices(static_cast<int>(data.size()), options.validation_fraction, rng);
  std::vector<TriggerExample> train_set, val_set;
  for (int i : split.train) train_set.push_back(data[i]);
  for (int i : split.validation) val_set.push_back(data[i]);

  TriggerTrainReport report;
  report.validation_indices = split.validation;
  double w = 1.0;
  if (options.positive_weight) {
    w = *options.positive_weight;
  } else {
    double n0 = 0, n1 = 0;
    for (const auto& ex : train_set) (ex.label == 1 ? n1 : n0) += 1.0;
    w = (n0 > 0 && n1 > 0) ? n0 / n1 : 1.0;
  }
  report.positive_weight = w;

  auto accuracy = [&](const std::vector<TriggerExample>& set) {
    int correct = 0;
    for (const auto& ex : set) correct += ((confidence(ex.hidden) >= 0.5) == (ex.label == 1));
    return set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(set.size());
  };

  nn::Adam adam(params_, nn::AdamOptions{.learning_rate = options.learning_rate});
  double best = accuracy(val_set);
  nn::Tensors best_params = params_;
  int since_best = 0;
  std::vector<TriggerExample> batch;
  nn::Tensors grad;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    double sum = 0.0;
    for (const auto& idx : nn::batches(static_cast<int>(train_set.size()), options.batch_size, rng)) {
      batch.clear();
      for (int i : idx) batch.push_back(train_set[i]);
      const double l = loss_and_gradient(batch, w, grad);
      if (!std::isfinite(l) || !nn::all_finite(grad))
        throw TrainingDivergedError("trigger loss became non-finite at epoch " + std::to_string(epoch));
      sum += l * static_cast<double>(idx.size());
      adam.step(params_, grad);
    }
    report.train_loss.push_back(sum / static_cast<double>(train_set.size()));
    const double acc = accuracy(val_set);
    report.validation_accuracy.push_back(acc);
    if (acc > best) {
      best = acc;
      best_params = params_;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  params_ = std::move(best_params);
  report.best_validation_accuracy = best;

  std::vector<double> conf;
  std::vector<int> labels;
  for (const auto& ex : val_set) {
    conf.push_back(confidence(ex.hidden));
    labels.push_back(ex.label);
  }
  report.validation_recall_incorrect = incorrect_recall(conf, labels, 0.5);
  return report;
}

double incorrect_recall(std::span<const double> confidences, std::span<const int> labels, double threshold) {
  if (confidences.size() != labels.size()) throw std::invalid_argument("confidence/label length mismatch");
  int n0 = 0, hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) continue;
    ++n0;
    hit += should_reflect(confidences[i], threshold);
  }
  return n0 == 0 ? 0.0 : static_cast<double>(hit) / n0;
}

double calibrate_threshold(std::span<const double> confidences, std::span<const int> labels, double min_recall) {
  if (confidences.size() != labels.size()) throw std::invalid_argument("confidence/label length mismatch");
  if (!(min_recall >= 0.0 && min_recall <= 1.0)) throw std::invalid_argument("recall target must be in [0,1]");
  std::vector<double> incorrect;
  bool has1 = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) incorrect.push_back(confidences[i]);
    else has1 = true;
  }
  if (incorrect.empty() || !has1) throw std::invalid_argument("calibration set must contain both classes");
  std::sort(incorrect.begin(), incorrect.end());
  const auto n0 = static_cast<double>(incorrect.size());
  const auto needed = static_cast<std::size_t>(std::ceil(min_recall * n0 - 1e-12));
  if (needed == 0) return 0.0;
  // Recall reaches needed/n0 once the threshold exceeds the needed-th
  // smallest confidence.
  const double tau = std::nextafter(incorrect[needed - 1], std::numeric_limits<double>::infinity());
  if (tau > 1.0) throw UnachievableRecallError("recall target needs a threshold above 1");
  return tau;
}

}  // namespace foresight
