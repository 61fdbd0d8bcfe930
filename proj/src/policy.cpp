#include "foresight/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace foresight {
namespace {

enum Param : int { kW1, kB1, kW2, kB2, kWv, kBv, kEmb, kWg, kBg, kWo, kBo, kNumParams };

constexpr int kPlanStepWidth = kNumVerbs + kMaxPieces;

thread_local std::uint64_t g_forward_passes = 0;

// Each observation enters with its slot-index feature expanded to a one-hot
// over slots (all zero when the piece is not inserted).
constexpr int kEmbeddedPieceWidth = kSlotIndexOffset + kMaxPieces;
constexpr int kEmbeddedObservationSize = kMaxPieces * kEmbeddedPieceWidth;

int input_size_for(const PolicyShape& s) { return 1 + 2 * kEmbeddedObservationSize + 1 + s.horizon * kPlanStepWidth; }

int embed_observation(const Observation& obs, nn::Vector& x, int o) {
  for (int p = 0; p < kMaxPieces; ++p) {
    const double* block = obs.data() + p * kPieceFeatureWidth;
    for (int f = 0; f < kSlotIndexOffset; ++f) x[o + f] = block[f];
    const int slot = static_cast<int>(std::lround(block[kSlotIndexOffset] * kMaxPieces)) - 1;
    if (slot >= 0 && slot < kMaxPieces) x[o + kSlotIndexOffset + slot] = 1.0;
    o += kEmbeddedPieceWidth;
  }
  return o;
}

void check_context(const PolicyContext& ctx, const PolicyShape& shape) {
  if (ctx.num_pieces < 1 || ctx.num_pieces > kMaxPieces)
    throw std::invalid_argument("context num_pieces out of range");
  if (ctx.kind == ContextKind::kPropose && !ctx.plan.empty())
    throw std::invalid_argument("propose context must not carry a plan");
  if (static_cast<int>(ctx.plan.size()) > shape.horizon)
    throw std::invalid_argument("plan longer than the model horizon");
}

}  // namespace

std::uint64_t policy_forward_passes() { return g_forward_passes; }

PolicyModel::PolicyModel(PolicyShape shape, std::uint64_t seed) : PolicyModel(zeros(shape)) {
  Rng rng(seed);
  const int dh = shape.hidden, de = shape.verb_embedding;
  params_[kW1] = nn::he_init(dh, input_size(), rng);
  params_[kW2] = nn::he_init(dh, dh, rng);
  params_[kEmb] = nn::he_init(de, kNumVerbs, rng) * 0.5;
  params_[kWg] = nn::he_init(dh, dh + de, rng);
}

PolicyModel PolicyModel::zeros(PolicyShape shape) {
  if (shape.hidden < 1 || shape.verb_embedding < 1 || shape.horizon < 1)
    throw std::invalid_argument("policy shape dimensions must be positive");
  PolicyModel m{Empty{}};
  m.shape_ = shape;
  const int dh = shape.hidden, de = shape.verb_embedding, din = input_size_for(shape);
  m.params_.assign(kNumParams, nn::Matrix());
  m.params_[kW1] = nn::Matrix::Zero(dh, din);
  m.params_[kB1] = nn::Matrix::Zero(dh, 1);
  m.params_[kW2] = nn::Matrix::Zero(dh, dh);
  m.params_[kB2] = nn::Matrix::Zero(dh, 1);
  m.params_[kWv] = nn::Matrix::Zero(kNumVerbs, dh);
  m.params_[kBv] = nn::Matrix::Zero(kNumVerbs, 1);
  m.params_[kEmb] = nn::Matrix::Zero(de, kNumVerbs);
  m.params_[kWg] = nn::Matrix::Zero(dh, dh + de);
  m.params_[kBg] = nn::Matrix::Zero(dh, 1);
  m.params_[kWo] = nn::Matrix::Zero(kMaxPieces, dh);
  m.params_[kBo] = nn::Matrix::Zero(kMaxPieces, 1);
  return m;
}

int PolicyModel::input_size() const { return input_size_for(shape_); }

nn::Vector PolicyModel::features(const PolicyContext& ctx) const {
  check_context(ctx, shape_);
  nn::Vector x = nn::Vector::Zero(input_size());
  int o = 0;
  x[o++] = ctx.kind == ContextKind::kReflect ? 1.0 : 0.0;
  o = embed_observation(ctx.current, x, o);
  o = embed_observation(ctx.goal, x, o);
  if (ctx.kind == ContextKind::kReflect)
    x[o] = std::clamp(ctx.advantage / shape_.horizon, -1.0, 1.0);
  ++o;
  for (std::size_t j = 0; j < ctx.plan.size(); ++j) {
    const Action& a = ctx.plan[j];
    const int base = o + static_cast<int>(j) * kPlanStepWidth;
    x[base + static_cast<int>(a.verb)] = 1.0;
    if (a.object >= 0 && a.object < kMaxPieces) x[base + kNumVerbs + a.object] = 1.0;
  }
  return x;
}

PolicyModel::Trunk PolicyModel::trunk(const PolicyContext& ctx) const {
  const nn::Vector x = features(ctx);
  nn::Vector h1 = (params_[kW1] * x + params_[kB1]).cwiseMax(0.0);
  return Trunk{(params_[kW2] * h1 + params_[kB2]).cwiseMax(0.0)};
}

nn::Vector PolicyModel::verb_scores(const Trunk& t) const { return params_[kWv] * t.h2 + params_[kBv]; }

nn::Vector PolicyModel::object_hidden(const Trunk& t, int verb) const {
  const int dh = shape_.hidden, de = shape_.verb_embedding;
  nn::Vector u(dh + de);
  u << t.h2, params_[kEmb].col(verb);
  return (params_[kWg] * u + params_[kBg]).cwiseMax(0.0);
}

nn::Vector PolicyModel::object_scores(const nn::Vector& g, int num_pieces) const {
  nn::Vector full = params_[kWo] * g + params_[kBo];
  return full.head(num_pieces);
}

std::vector<double> PolicyModel::logits(const PolicyContext& ctx, std::span<const int> prefix,
                                        int position) const {
  if (position != 0 && position != 1) throw std::invalid_argument("position must be 0 or 1");
  if (static_cast<int>(prefix.size()) != position)
    throw std::invalid_argument("prefix length must equal the position");
  if (position == 1 && (prefix[0] < 0 || prefix[0] >= kNumVerbs))
    throw std::invalid_argument("prefix verb id out of range");
  ++g_forward_passes;
  const Trunk t = trunk(ctx);
  nn::Vector out = position == 0 ? verb_scores(t) : object_scores(object_hidden(t, prefix[0]), ctx.num_pieces);
  if (!out.allFinite()) throw std::runtime_error("policy produced non-finite logits");
  return {out.data(), out.data() + out.size()};
}

namespace {
int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}
}  // namespace

Proposal PolicyModel::propose(const PolicyContext& ctx) const {
  g_forward_passes += 2;
  const Trunk t = trunk(ctx);
  const nn::Vector vs = verb_scores(t);
  const auto verb_lp = nn::log_softmax(std::span<const double>(vs.data(), vs.size()));
  const int verb = argmax(verb_lp);
  const nn::Vector g = object_hidden(t, verb);
  const nn::Vector os = object_scores(g, ctx.num_pieces);
  const auto obj_lp = nn::log_softmax(std::span<const double>(os.data(), os.size()));
  const int obj = argmax(obj_lp);
  return Proposal{Action{static_cast<Verb>(verb), obj}, verb_lp[verb] + obj_lp[obj],
                  HiddenState(g.data(), g.data() + g.size())};
}

HiddenState PolicyModel::hidden_state(const PolicyContext& ctx, Verb verb) const {
  const nn::Vector g = object_hidden(trunk(ctx), static_cast<int>(verb));
  return {g.data(), g.data() + g.size()};
}

std::vector<ScoredAction> PolicyModel::top_w(const PolicyContext& ctx, int w) const {
  if (w < 1) throw std::invalid_argument("beam width must be at least 1");
  g_forward_passes += 1 + kNumVerbs;
  const Trunk t = trunk(ctx);
  const nn::Vector vs = verb_scores(t);
  const auto verb_lp = nn::log_softmax(std::span<const double>(vs.data(), vs.size()));
  std::vector<ScoredAction> all;
  all.reserve(kNumVerbs * ctx.num_pieces);
  for (int v = 0; v < kNumVerbs; ++v) {
    const nn::Vector os = object_scores(object_hidden(t, v), ctx.num_pieces);
    const auto obj_lp = nn::log_softmax(std::span<const double>(os.data(), os.size()));
    for (int o = 0; o < ctx.num_pieces; ++o)
      all.push_back(ScoredAction{Action{static_cast<Verb>(v), o}, verb_lp[v] + obj_lp[o]});
  }
  // `all` is generated in action order, so a stable sort keeps ties ordered.
  std::stable_sort(all.begin(), all.end(),
                   [](const ScoredAction& a, const ScoredAction& b) { return a.log_probability > b.log_probability; });
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(w)));
  return all;
}

double PolicyModel::loss(std::span<const PolicyExample> batch) const { return evaluate(batch, nullptr); }

double PolicyModel::loss_and_gradient(std::span<const PolicyExample> batch, nn::Tensors& grad) const {
  return evaluate(batch, &grad);
}

// Batched forward pass; the backward pass runs only when `grad_out` is set.
double PolicyModel::evaluate(std::span<const PolicyExample> batch, nn::Tensors* grad_out) const {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw std::invalid_argument("empty batch");
  const int dh = shape_.hidden, de = shape_.verb_embedding;

  nn::Matrix x(input_size(), n);
  for (int b = 0; b < n; ++b) x.col(b) = features(batch[b].context);

  const nn::Matrix z1 = (params_[kW1] * x).colwise() + params_[kB1].col(0);
  const nn::Matrix h1 = nn::relu(z1);
  const nn::Matrix z2 = (params_[kW2] * h1).colwise() + params_[kB2].col(0);
  const nn::Matrix h2 = nn::relu(z2);
  const nn::Matrix vs = (params_[kWv] * h2).colwise() + params_[kBv].col(0);

  nn::Matrix u(dh + de, n);
  u.topRows(dh) = h2;
  for (int b = 0; b < n; ++b) u.col(b).tail(de) = params_[kEmb].col(static_cast<int>(batch[b].target.verb));
  const nn::Matrix zg = (params_[kWg] * u).colwise() + params_[kBg].col(0);
  const nn::Matrix g = nn::relu(zg);
  const nn::Matrix os = (params_[kWo] * g).colwise() + params_[kBo].col(0);

  double total = 0.0;
  nn::Matrix dvs = nn::Matrix::Zero(kNumVerbs, n);
  nn::Matrix dos = nn::Matrix::Zero(kMaxPieces, n);
  for (int b = 0; b < n; ++b) {
    const auto& ex = batch[b];
    const int p = ex.context.num_pieces;
    if (ex.target.object < 0 || ex.target.object >= p) throw std::invalid_argument("target object out of range");
    const int tv = static_cast<int>(ex.target.verb), to = ex.target.object;
    const auto vlp = nn::log_softmax(std::span<const double>(vs.col(b).data(), kNumVerbs));
    const auto olp = nn::log_softmax(std::span<const double>(os.col(b).data(), p));
    total -= vlp[tv] + olp[to];
    for (int v = 0; v < kNumVerbs; ++v) dvs(v, b) = std::exp(vlp[v]) - (v == tv ? 1.0 : 0.0);
    for (int o = 0; o < p; ++o) dos(o, b) = std::exp(olp[o]) - (o == to ? 1.0 : 0.0);
  }
  const double mean = total / n;
  if (!std::isfinite(mean) || grad_out == nullptr) return mean;

  dvs /= n;
  dos /= n;
  nn::Tensors& grad = *grad_out;
  grad.assign(kNumParams, nn::Matrix());
  grad[kWo] = dos * g.transpose();
  grad[kBo] = dos.rowwise().sum();
  const nn::Matrix dzg = (params_[kWo].transpose() * dos).cwiseProduct(nn::relu_mask(zg));
  grad[kWg] = dzg * u.transpose();
  grad[kBg] = dzg.rowwise().sum();
  const nn::Matrix du = params_[kWg].transpose() * dzg;
  grad[kEmb] = nn::Matrix::Zero(de, kNumVerbs);
  for (int b = 0; b < n; ++b) grad[kEmb].col(static_cast<int>(batch[b].target.verb)) += du.col(b).tail(de);

  grad[kWv] = dvs * h2.transpose();
  grad[kBv] = dvs.rowwise().sum();
  const nn::Matrix dh2 = params_[kWv].transpose() * dvs + du.topRows(dh);
  const nn::Matrix dz2 = dh2.cwiseProduct(nn::relu_mask(z2));
  grad[kW2] = dz2 * h1.transpose();
  grad[kB2] = dz2.rowwise().sum();
  const nn::Matrix dz1 = (params_[kW2].transpose() * dz2).cwiseProduct(nn::relu_mask(z1));
  grad[kW1] = dz1 * x.transpose();
  grad[kB1] = dz1.rowwise().sum();
  return mean;
}

PolicyTrainReport PolicyModel::train(std::span<const PolicyExample> data, const PolicyTrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("policy training needs at least one example");
  if (options.batch_size < 1 || options.epochs < 0) throw std::invalid_argument("bad training options");
  Rng rng(options.seed);
  nn::Adam adam(params_, nn::AdamOptions{.learning_rate = options.learning_rate,
                                         .weight_decay = options.weight_decay});
  auto full_loss = [&] {
    double sum = 0.0;
    const std::size_t chunk = 1024;
    for (std::size_t s = 0; s < data.size(); s += chunk) {
      const auto part = data.subspan(s, std::min(chunk, data.size() - s));
      sum += loss(part) * static_cast<double>(part.size());
    }
    return sum / static_cast<double>(data.size());
  };

  PolicyTrainReport report;
  report.initial_loss = full_loss();
  double best = report.initial_loss;
  nn::Tensors best_params = params_;
  std::vector<PolicyExample> batch;
  nn::Tensors grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (const auto& idx : nn::batches(static_cast<int>(data.size()), options.batch_size, rng)) {
      batch.clear();
      for (int i : idx) batch.push_back(data[i]);
      const double l = loss_and_gradient(batch, grad);
      if (!std::isfinite(l) || !nn::all_finite(grad)) {
        std::ostringstream msg;
        msg << "policy loss became non-finite at epoch " << epoch << " (batch loss " << l << ")";
        throw TrainingDivergedError(msg.str());
      }
      adam.step(params_, grad);
    }
    const double l = full_loss();
    report.epoch_loss.push_back(l);
    if (l <= best) {
      best = l;
      best_params = params_;
    }
  }
  params_ = std::move(best_params);
  report.final_loss = best;
  return report;
}

}  // namespace foresight
