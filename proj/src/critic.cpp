#include "foresight/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace foresight {
namespace {
enum Param : int { kW1, kB1, kW2, kB2, kNumParams };
constexpr int kInput = 3 * kObservationSize;
}  // namespace

CriticModel CriticModel::zeros(int hidden) {
  if (hidden < 1) throw std::invalid_argument("critic hidden width must be positive");
  CriticModel m{Empty{}};
  m.params_.assign(kNumParams, nn::Matrix());
  m.params_[kW1] = nn::Matrix::Zero(hidden, kInput);
  m.params_[kB1] = nn::Matrix::Zero(hidden, 1);
  m.params_[kW2] = nn::Matrix::Zero(1, hidden);
  m.params_[kB2] = nn::Matrix::Zero(1, 1);
  return m;
}

CriticModel::CriticModel(int hidden, std::uint64_t seed) : CriticModel(zeros(hidden)) {
  Rng rng(seed);
  params_[kW1] = nn::he_init(hidden, kInput, rng);
}

double CriticModel::predict(const Observation& current, const Observation& future, const Observation& goal) const {
  return predict(std::span<const double>(current), std::span<const double>(future), std::span<const double>(goal));
}

double CriticModel::predict(std::span<const double> current, std::span<const double> future,
                            std::span<const double> goal) const {
  if (current.size() != kObservationSize || future.size() != kObservationSize || goal.size() != kObservationSize)
    throw std::invalid_argument("critic input observations have the wrong length");
  nn::Vector x(kInput);
  std::copy(current.begin(), current.end(), x.data());
  std::copy(future.begin(), future.end(), x.data() + kObservationSize);
  std::copy(goal.begin(), goal.end(), x.data() + 2 * kObservationSize);
  const nn::Vector h = (params_[kW1] * x + params_[kB1]).cwiseMax(0.0);
  return (params_[kW2] * h + params_[kB2])(0, 0);
}

double CriticModel::loss(std::span<const CriticExample> batch, double label_clip) const {
  return evaluate(batch, label_clip, nullptr);
}

double CriticModel::loss_and_gradient(std::span<const CriticExample> batch, double label_clip,
                                      nn::Tensors& grad) const {
  return evaluate(batch, label_clip, &grad);
}

double CriticModel::evaluate(std::span<const CriticExample> batch, double label_clip, nn::Tensors* grad) const {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw std::invalid_argument("empty batch");
  nn::Matrix x(kInput, n);
  nn::Matrix y(1, n);
  for (int b = 0; b < n; ++b) {
    const auto& ex = batch[b];
    std::copy(ex.current.begin(), ex.current.end(), x.col(b).data());
    std::copy(ex.future.begin(), ex.future.end(), x.col(b).data() + kObservationSize);
    std::copy(ex.goal.begin(), ex.goal.end(), x.col(b).data() + 2 * kObservationSize);
    y(0, b) = std::clamp(ex.label, -label_clip, label_clip);
  }
  const nn::Matrix z1 = (params_[kW1] * x).colwise() + params_[kB1].col(0);
  const nn::Matrix h = nn::relu(z1);
  const nn::Matrix out = (params_[kW2] * h).colwise() + params_[kB2].col(0);
  const nn::Matrix err = out - y;
  const double mse = err.squaredNorm() / n;
  if (grad == nullptr || !std::isfinite(mse)) return mse;

  const nn::Matrix dout = err * (2.0 / n);
  grad->assign(kNumParams, nn::Matrix());
  (*grad)[kW2] = dout * h.transpose();
  (*grad)[kB2] = dout.rowwise().sum();
  const nn::Matrix dz1 = (params_[kW2].transpose() * dout).cwiseProduct(nn::relu_mask(z1));
  (*grad)[kW1] = dz1 * x.transpose();
  (*grad)[kB1] = dz1.rowwise().sum();
  return mse;
}

CriticTrainReport CriticModel::train(std::span<const CriticExample> data, const CriticTrainOptions& options) {
  if (data.size() < 10) throw std::invalid_argument("critic training needs at least 10 examples");
  Rng rng(options.seed);
  const nn::Split split = nn::split_indices(static_cast<int>(data.size()), options.validation_fraction, rng);
  std::vector<CriticExample> train_set, val_set;
  for (int i : split.train) train_set.push_back(data[i]);
  for (int i : split.validation) val_set.push_back(data[i]);

  CriticTrainReport report;
  report.train_size = train_set.size();
  report.validation_size = val_set.size();
  double mean = 0.0;
  for (const auto& ex : val_set) mean += std::clamp(ex.label, -options.label_clip, options.label_clip);
  mean /= static_cast<double>(val_set.size());
  for (const auto& ex : val_set) {
    const double d = std::clamp(ex.label, -options.label_clip, options.label_clip) - mean;
    report.validation_label_variance += d * d;
  }
  report.validation_label_variance /= static_cast<double>(val_set.size());

  nn::Adam adam(params_, nn::AdamOptions{.learning_rate = options.learning_rate});
  double best = loss(val_set, options.label_clip);
  report.best_validation_mse = best;
  nn::Tensors best_params = params_;
  int since_best = 0;
  std::vector<CriticExample> batch;
  nn::Tensors grad;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    double sum = 0.0;
    for (const auto& idx : nn::batches(static_cast<int>(train_set.size()), options.batch_size, rng)) {
      batch.clear();
      for (int i : idx) batch.push_back(train_set[i]);
      const double l = loss_and_gradient(batch, options.label_clip, grad);
      if (!std::isfinite(l) || !nn::all_finite(grad))
        throw TrainingDivergedError("critic loss became non-finite at epoch " + std::to_string(epoch));
      sum += l * static_cast<double>(idx.size());
      adam.step(params_, grad);
    }
    report.train_mse.push_back(sum / static_cast<double>(train_set.size()));
    const double v = loss(val_set, options.label_clip);
    report.validation_mse.push_back(v);
    if (v < best) {
      best = v;
      best_params = params_;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  params_ = std::move(best_params);
  report.best_validation_mse = best;
  return report;
}

}  // namespace foresight
