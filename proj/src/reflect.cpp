#include "foresight/reflect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "foresight/nn.hpp"

namespace foresight {

void validate(const ReflectConfig& cfg) {
  if (cfg.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (cfg.beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
  if (cfg.base_size < 1) throw std::invalid_argument("base size must be >= 1");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0,1]");
  if (!(cfg.alpha1 >= 0.0) || !(cfg.alpha2 >= 0.0)) throw std::invalid_argument("alpha weights must be >= 0");
  if (!std::isfinite(cfg.sigma)) throw std::invalid_argument("sigma must be finite");
}

namespace {

struct Beam {
  ImaginedTrajectory traj;
  Observation last_obs{};
};

PolicyContext propose_context(const Observation& current, const Observation& goal, int num_pieces) {
  PolicyContext ctx;
  ctx.kind = ContextKind::kPropose;
  ctx.current = current;
  ctx.goal = goal;
  ctx.num_pieces = num_pieces;
  return ctx;
}

}  // namespace

std::vector<ImaginedTrajectory> beam_futures(const BeamStart& start, const PolicyModel& policy,
                                             const ImaginationConfig& dynamics, int width, int horizon,
                                             std::uint64_t seed) {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  validate(dynamics);
  const TaskInstance& task = start.task;

  std::vector<Beam> beams(1);
  beams[0].traj.final_state = start.state;
  beams[0].traj.reached_goal = is_goal(start.state, task);
  beams[0].last_obs = start.current;

  for (int depth = 0; depth < horizon; ++depth) {
    if (std::all_of(beams.begin(), beams.end(), [](const Beam& b) { return b.traj.reached_goal; })) break;
    std::vector<Beam> candidates;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const Beam& beam = beams[b];
      if (beam.traj.reached_goal) {
        candidates.push_back(beam);
        continue;
      }
      const auto expansions =
          policy.top_w(propose_context(beam.last_obs, start.goal, task.num_pieces), width);
      for (std::size_t r = 0; r < expansions.size(); ++r) {
        Rng rng(derive_seed(seed, {b, static_cast<std::uint64_t>(depth), r}));
        ImaginedStep s = imagine_step(beam.traj.final_state, task, expansions[r].action, dynamics, rng);
        Beam child = beam;
        child.traj.actions.push_back(expansions[r].action);
        child.traj.predicted.push_back(s.observation);
        child.traj.log_probability += expansions[r].log_probability;
        child.traj.final_state = s.state;
        child.traj.reached_goal = is_goal(s.state, task);
        child.last_obs = s.observation;
        candidates.push_back(std::move(child));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Beam& a, const Beam& b) {
      return a.traj.log_probability > b.traj.log_probability;
    });
    if (static_cast<int>(candidates.size()) > width) candidates.resize(width);
    beams = std::move(candidates);
  }

  std::vector<ImaginedTrajectory> out;
  out.reserve(beams.size());
  for (auto& b : beams) out.push_back(std::move(b.traj));
  return out;
}

StreamSets stratify(std::span<const double> advantages, int base_size, double sigma) {
  if (base_size < 1) throw std::invalid_argument("base size must be >= 1");
  std::vector<int> order(advantages.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return advantages[a] > advantages[b]; });
  StreamSets sets;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const int k = order[r];
    if (static_cast<int>(r) < base_size) sets.base.push_back(k);
    else if (advantages[k] >= sigma) sets.promising.push_back(k);
    else sets.suboptimal.push_back(k);
  }
  return sets;
}

StreamSets score_and_stratify(std::vector<ImaginedTrajectory>& trajectories, const BeamStart& start,
                              const Critic& critic, int base_size, double sigma) {
  if (trajectories.empty()) throw std::invalid_argument("no trajectories to score");
  std::vector<double> adv;
  adv.reserve(trajectories.size());
  for (auto& t : trajectories) {
    const Observation& predicted = t.predicted.empty() ? start.current : t.predicted.back();
    t.advantage = critic.estimate(CriticQuery{start.current, predicted, start.goal, start.state, t.final_state});
    adv.push_back(t.advantage);
  }
  return stratify(adv, base_size, sigma);
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: distributions have different support");
  // sum_i x_i log2(x_i / m_i), with 0 log 0 = 0.
  auto kl_to_mid = [](double x, double m) { return x > 0.0 ? x * std::log2(x / m) : 0.0; };
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    total += 0.5 * kl_to_mid(p[i], m) + 0.5 * kl_to_mid(q[i], m);
  }
  return std::clamp(total, 0.0, 1.0);
}

namespace {

std::vector<double> softmax_of(const std::vector<double>& f) { return nn::softmax(f); }

std::vector<double> combine(const Logits& a, double wa, const Logits& b, double wb) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

void check_logits(std::span<const Logits> group, std::size_t n) {
  for (const auto& f : group) {
    if (f.size() != n) throw std::invalid_argument("aggregate_position: logits of different lengths");
    for (double v : f)
      if (!std::isfinite(v)) throw std::invalid_argument("aggregate_position: non-finite logits");
  }
}

}  // namespace

Aggregation aggregate_position(std::span<const Logits> base, std::span<const Logits> promising,
                               std::span<const Logits> suboptimal, const ReflectConfig& cfg) {
  if (base.empty()) throw std::invalid_argument("aggregate_position: empty base set");
  const std::size_t n = base.front().size();
  check_logits(base, n);
  check_logits(promising, n);
  check_logits(suboptimal, n);

  Aggregation out;
  out.distribution.assign(n, 0.0);
  const std::size_t refs = promising.size() + suboptimal.size();
  for (const Logits& fk : base) {
    std::vector<double> inner(n, 0.0);
    auto add = [&](const std::vector<double>& p) {
      for (std::size_t i = 0; i < n; ++i) inner[i] += p[i];
    };
    if (refs == 0) {
      add(softmax_of(fk));
    } else {
      for (const Logits& fl : promising) add(softmax_of(combine(fk, 1.0, fl, cfg.alpha1)));
      const auto pk = softmax_of(fk);
      for (const Logits& fl : suboptimal) {
        const double d = jsd(pk, softmax_of(fl));
        out.divergences.push_back(d);
        if (d < cfg.gamma) {
          add(softmax_of(combine(fk, 1.0, fl, cfg.alpha1)));
        } else {
          ++out.contrastive_pairs;
          add(softmax_of(combine(fk, 1.0 + cfg.alpha2, fl, -cfg.alpha2)));
        }
      }
    }
    const double denom = refs == 0 ? 1.0 : static_cast<double>(refs);
    for (std::size_t i = 0; i < n; ++i) out.distribution[i] += inner[i] / denom;
  }
  for (double& v : out.distribution) v /= static_cast<double>(base.size());
  return out;
}

namespace {

int select_token(const std::vector<double>& dist, SelectionRule rule, Rng& rng) {
  if (rule == SelectionRule::kArgmax)
    return static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  double u = uniform01(rng), acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(dist.size()) - 1;
}

}  // namespace

ReflectOutcome decode_reflection(const BeamStart& start, std::vector<ImaginedTrajectory> trajectories,
                                 const StreamSets& sets, const PolicyModel& policy, const ReflectConfig& cfg,
                                 std::uint64_t seed) {
  validate(cfg);
  const int k = static_cast<int>(trajectories.size());
  if (k == 0) throw std::invalid_argument("no trajectories to decode from");

  std::vector<PolicyContext> contexts(k);
  for (int i = 0; i < k; ++i) {
    PolicyContext& ctx = contexts[i];
    ctx.kind = ContextKind::kReflect;
    ctx.current = start.current;
    ctx.goal = start.goal;
    ctx.num_pieces = start.task.num_pieces;
    ctx.advantage = trajectories[i].advantage;
    ctx.plan.assign(trajectories[i].actions.begin(),
                    trajectories[i].actions.begin() +
                        std::min<std::size_t>(trajectories[i].actions.size(), policy.shape().horizon));
  }

  ReflectOutcome out;
  auto& diag = out.diagnostics;
  diag.streams = k;
  for (const auto& t : trajectories) diag.advantages.push_back(t.advantage);
  diag.base = static_cast<int>(sets.base.size());
  diag.promising = static_cast<int>(sets.promising.size());
  diag.suboptimal = static_cast<int>(sets.suboptimal.size());

  Rng rng(seed);
  std::vector<int> prefix;
  for (int position = 0; position < 2; ++position) {
    auto gather = [&](const std::vector<int>& idx) {
      std::vector<Logits> fs;
      fs.reserve(idx.size());
      for (int i : idx) fs.push_back(policy.logits(contexts[i], prefix, position));
      return fs;
    };
    const auto fb = gather(sets.base);
    const auto fp = gather(sets.promising);
    const auto fn = gather(sets.suboptimal);
    Aggregation agg = aggregate_position(fb, fp, fn, cfg);
    diag.divergences.insert(diag.divergences.end(), agg.divergences.begin(), agg.divergences.end());
    diag.contrastive_pairs += agg.contrastive_pairs;
    prefix.push_back(select_token(agg.distribution, cfg.selection, rng));
  }
  out.action = Action{static_cast<Verb>(prefix[0]), prefix[1]};
  diag.legal = is_valid(start.state, start.task, out.action);
  out.trajectories = std::move(trajectories);
  return out;
}

ReflectOutcome reflect_decide(const BeamStart& start, const PolicyModel& policy, const Critic& critic,
                              const ImaginationConfig& dynamics, const ReflectConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  auto trajectories = beam_futures(start, policy, dynamics, cfg.beam_width, cfg.horizon, derive_seed(seed, {1}));
  const StreamSets sets = score_and_stratify(trajectories, start, critic, cfg.base_size, cfg.sigma);
  return decode_reflection(start, std::move(trajectories), sets, policy, cfg, derive_seed(seed, {2}));
}

Action select_best_of_n(std::span<const ImaginedTrajectory> trajectories) {
  const ImaginedTrajectory* best = nullptr;
  for (const auto& t : trajectories) {
    if (t.actions.empty()) continue;
    if (best == nullptr || t.log_probability > best->log_probability) best = &t;
  }
  if (best == nullptr) throw std::invalid_argument("best-of-n needs a trajectory with at least one action");
  return best->actions.front();
}

Action select_majority(std::span<const ImaginedTrajectory> trajectories) {
  struct Tally {
    int count = 0;
    double log_prob = 0.0;
  };
  std::map<Action, Tally> tally;
  for (const auto& t : trajectories) {
    if (t.actions.empty()) continue;
    auto& entry = tally[t.actions.front()];
    ++entry.count;
    entry.log_prob += t.log_probability;
  }
  if (tally.empty()) throw std::invalid_argument("majority vote needs a trajectory with at least one action");
  auto best = tally.begin();
  for (auto it = tally.begin(); it != tally.end(); ++it) {
    if (it->second.count > best->second.count ||
        (it->second.count == best->second.count && it->second.log_prob > best->second.log_prob))
      best = it;
  }
  return best->first;
}

}  // namespace foresight
