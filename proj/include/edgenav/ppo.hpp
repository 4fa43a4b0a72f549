// PPO with a clipped surrogate over discrete actions, GAE, and the training /
// evaluation protocol for the navigation policy.
#pragma once

#include "edgenav/navsim.hpp"
#include "edgenav/nn.hpp"

namespace edgenav {

struct PpoConfig {
  double lr = 3e-4;
  int64_t batch_size = 128;
  int64_t horizon = 1024;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int64_t update_epochs = 4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double target_kl = 0.0;  // >0 enables early stop when approx KL exceeds it
  int64_t hidden = 64;
};

// Two-layer tanh trunk with categorical actor and scalar critic heads.
struct PolicyNet {
  int64_t obs_dim = 0, n_actions = 0;
  LinearLayer<double> fc1, fc2, actor, critic;

  PolicyNet() = default;
  PolicyNet(int64_t obs_dim_, int64_t hidden, int64_t n_actions_, uint64_t seed)
      : obs_dim(obs_dim_), n_actions(n_actions_) {
    Rng rng(derive_seed(seed, 31));
    fc1 = LinearLayer<double>(obs_dim, hidden, true, rng);
    fc2 = LinearLayer<double>(hidden, hidden, true, rng);
    actor = LinearLayer<double>(hidden, n_actions, true, rng);
    critic = LinearLayer<double>(hidden, 1, true, rng);
  }

  struct Eval {
    Tensor logits;  // [B, n_actions]
    Tensor value;   // [B, 1]
  };

  Eval forward(const Tensor& obs) const {
    Tensor h = tanh(fc2.forward(tanh(fc1.forward(obs))));
    return {actor.forward(h), critic.forward(h)};
  }

  // Single-observation helpers (tape off).
  std::vector<double> action_probs(const std::vector<double>& obs) const {
    NoGradGuard ng;
    Tensor in = Tensor::from_data({1, obs_dim}, std::vector<double>(obs.begin(), obs.end()));
    Tensor probs = softmax_lastdim(forward(in).logits);
    return {probs.data().begin(), probs.data().end()};
  }

  struct ActSample {
    int action;
    double log_prob;
    double value;
  };

  ActSample act(const std::vector<double>& obs, Rng& rng) const {
    NoGradGuard ng;
    Tensor in = Tensor::from_data({1, obs_dim}, std::vector<double>(obs.begin(), obs.end()));
    Eval ev = forward(in);
    Tensor logp = log_softmax_lastdim(ev.logits);
    const double u = rng.uniform(0.0, 1.0);
    double acc = 0.0;
    int action = static_cast<int>(n_actions) - 1;
    for (int64_t a = 0; a < n_actions; ++a) {
      acc += std::exp(logp.data()[a]);
      if (u < acc) {
        action = static_cast<int>(a);
        break;
      }
    }
    return {action, logp.data()[action], ev.value.data()[0]};
  }

  int greedy_action(const std::vector<double>& obs) const {
    NoGradGuard ng;
    Tensor in = Tensor::from_data({1, obs_dim}, std::vector<double>(obs.begin(), obs.end()));
    Eval ev = forward(in);
    int best = 0;
    for (int64_t a = 1; a < n_actions; ++a)
      if (ev.logits.data()[a] > ev.logits.data()[best]) best = static_cast<int>(a);
    return best;
  }

  double value_of(const std::vector<double>& obs) const {
    NoGradGuard ng;
    Tensor in = Tensor::from_data({1, obs_dim}, std::vector<double>(obs.begin(), obs.end()));
    return forward(in).value.data()[0];
  }

  ParamMap<double> parameters() const {
    ParamMap<double> pm;
    fc1.collect("fc1", pm);
    fc2.collect("fc2", pm);
    actor.collect("actor", pm);
    critic.collect("critic", pm);
    return pm;
  }
};

struct Transition {
  std::vector<double> obs;
  int action = 0;
  double reward = 0;
  bool done = false;
  double log_prob = 0;
  double value = 0;
};

struct RolloutBuffer {
  std::vector<Transition> steps;
  std::vector<double> advantages, returns;
  double bootstrap_value = 0.0;  // V(s_T) at a horizon cut

  // GAE(gamma, lambda); advantages are raw until normalize_advantages().
  void compute_gae(double gamma, double lambda) {
    const int64_t n = static_cast<int64_t>(steps.size());
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    double gae = 0.0;
    for (int64_t t = n - 1; t >= 0; --t) {
      const double not_done = steps[t].done ? 0.0 : 1.0;
      const double next_value =
          t == n - 1 ? bootstrap_value : steps[t + 1].value;
      const double delta =
          steps[t].reward + gamma * next_value * not_done - steps[t].value;
      gae = delta + gamma * lambda * not_done * gae;
      advantages[t] = gae;
      returns[t] = advantages[t] + steps[t].value;
    }
  }

  void normalize_advantages() {
    const int64_t n = static_cast<int64_t>(advantages.size());
    if (n == 0) return;
    double mean = 0;
    for (double a : advantages) mean += a;
    mean /= n;
    double var = 0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / n);
    if (stddev < 1e-12) return;
    for (double& a : advantages) a = (a - mean) / (stddev + 1e-8);
  }
};

struct EpisodeLog {
  double total_reward = 0;
  bool success = false;
  int64_t length = 0;
};

// Runs the stochastic policy for `horizon` steps, resetting on episode end;
// bootstraps the value at the cut.
inline RolloutBuffer collect_rollout(NavEnv& env, const PolicyNet& policy,
                                     int64_t horizon, Rng& rng, uint64_t reset_seed_base,
                                     int64_t& episode_counter,
                                     std::vector<EpisodeLog>* episodes = nullptr) {
  RolloutBuffer buf;
  buf.steps.reserve(horizon);
  Observation obs;
  if (env.state().boxes.empty() || env.state().done)
    obs = env.reset(derive_seed(reset_seed_base, episode_counter++));
  else
    obs = env.observe();
  EpisodeLog current;
  for (int64_t t = 0; t < horizon; ++t) {
    PolicyNet::ActSample sample = policy.act(obs.state_vector, rng);
    StepResult res = env.step(sample.action);
    Transition tr;
    tr.obs = obs.state_vector;
    tr.action = sample.action;
    tr.reward = res.reward;
    tr.done = res.done;
    tr.log_prob = sample.log_prob;
    tr.value = sample.value;
    buf.steps.push_back(std::move(tr));
    current.total_reward += res.reward;
    current.length += 1;
    if (res.done) {
      current.success = env.reached_goal();
      if (episodes) episodes->push_back(current);
      current = EpisodeLog{};
      obs = env.reset(derive_seed(reset_seed_base, episode_counter++));
    } else {
      obs = res.obs;
    }
  }
  buf.bootstrap_value =
      buf.steps.back().done ? 0.0 : policy.value_of(obs.state_vector);
  return buf;
}

struct UpdateStats {
  double policy_loss = 0, value_loss = 0, entropy = 0;
  double clip_fraction = 0, approx_kl = 0;
  double max_applied_kl = 0;
  int64_t minibatches_applied = 0;
};

// Clipped-surrogate update over shuffled minibatches. When target_kl is set,
// a minibatch whose pre-step approximate KL exceeds it is not applied and the
// update stops there.
inline UpdateStats ppo_update(PolicyNet& policy, Adam<double>& opt, RolloutBuffer& buf,
                              const PpoConfig& cfg, Rng& rng) {
  const int64_t n = static_cast<int64_t>(buf.steps.size());
  if (n == 0) throw ContractError("ppo_update: empty rollout buffer");
  buf.normalize_advantages();
  UpdateStats stats;
  double sum_policy = 0, sum_value = 0, sum_entropy = 0, sum_clip = 0, sum_kl = 0;
  int64_t applied = 0;
  bool stop = false;
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int64_t epoch = 0; epoch < cfg.update_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (int64_t off = 0; off < n && !stop; off += cfg.batch_size) {
      const int64_t b = std::min(cfg.batch_size, n - off);
      Tensor obs = Tensor::zeros({b, static_cast<int64_t>(policy.obs_dim)});
      Tensor onehot = Tensor::zeros({b, static_cast<int64_t>(policy.n_actions)});
      Tensor adv = Tensor::zeros({b, 1});
      Tensor ret = Tensor::zeros({b, 1});
      Tensor logp_old = Tensor::zeros({b, 1});
      for (int64_t i = 0; i < b; ++i) {
        const Transition& tr = buf.steps[order[off + i]];
        std::copy(tr.obs.begin(), tr.obs.end(), obs.data().begin() + i * policy.obs_dim);
        onehot.data()[i * policy.n_actions + tr.action] = 1.0;
        adv.data()[i] = buf.advantages[order[off + i]];
        ret.data()[i] = buf.returns[order[off + i]];
        logp_old.data()[i] = tr.log_prob;
      }
      PolicyNet::Eval ev = policy.forward(obs);
      Tensor logp_all = log_softmax_lastdim(ev.logits);
      Tensor logp_new = sum_lastdim(mul(logp_all, onehot));
      Tensor ratio = exp(sub(logp_new, logp_old));
      Tensor clipped = minimum(maximum(ratio, Tensor::full({b, 1}, 1.0 - cfg.clip_eps)),
                               Tensor::full({b, 1}, 1.0 + cfg.clip_eps));
      Tensor surrogate = minimum(mul(ratio, adv), mul(clipped, adv));
      Tensor policy_loss = neg(mean(surrogate));
      Tensor value_err = sub(ev.value, ret);
      Tensor value_loss = mean(mul(value_err, value_err));
      Tensor probs = softmax_lastdim(ev.logits);
      Tensor entropy = neg(mean(sum_lastdim(mul(probs, logp_all))));
      Tensor loss = add(policy_loss, sub(scale(value_loss, cfg.value_coef),
                                         scale(entropy, cfg.entropy_coef)));

      // diagnostics before stepping
      double kl = 0, clip_frac = 0;
      for (int64_t i = 0; i < b; ++i) {
        kl += logp_old.data()[i] - logp_new.data()[i];
        if (std::abs(ratio.data()[i] - 1.0) > cfg.clip_eps) clip_frac += 1.0;
      }
      kl /= b;
      clip_frac /= b;
      if (cfg.target_kl > 0 && kl > cfg.target_kl) {
        stop = true;
        break;  // do not apply this minibatch
      }
      opt.zero_grad();
      backward(loss);
      opt.step();
      ++applied;
      sum_policy += policy_loss.item();
      sum_value += value_loss.item();
      sum_entropy += entropy.item();
      sum_clip += clip_frac;
      sum_kl += kl;
      stats.max_applied_kl = std::max(stats.max_applied_kl, kl);
    }
  }
  stats.minibatches_applied = applied;
  if (applied > 0) {
    stats.policy_loss = sum_policy / applied;
    stats.value_loss = sum_value / applied;
    stats.entropy = sum_entropy / applied;
    stats.clip_fraction = sum_clip / applied;
    stats.approx_kl = sum_kl / applied;
  }
  return stats;
}

struct PolicyTrainOptions {
  int64_t total_steps = 500'000;
  uint64_t seed = 0;
  std::string csv_path;
  bool verbose = false;
};

struct PolicyTrainResult {
  PolicyNet policy;
  double final_success_rate_100 = 0;
  double final_mean_return_100 = 0;
  int64_t iterations = 0;
  int64_t episodes = 0;
};

// Alternates rollout collection and PPO updates; logs one CSV row per
// iteration with the rolling (last 100 episodes) return and success rate.
inline PolicyTrainResult train_policy(NavEnv& env, const PpoConfig& cfg,
                                      const PolicyTrainOptions& opts) {
  PolicyTrainResult result;
  result.policy = PolicyNet(5 * kNumClasses + kNumActions, cfg.hidden, kNumActions,
                            derive_seed(opts.seed, 41));
  Adam<double> opt(result.policy.parameters(), cfg.lr);
  Rng rng(derive_seed(opts.seed, 43));
  CsvWriter csv;
  if (!opts.csv_path.empty())
    csv.open(opts.csv_path,
             {"iteration", "steps", "mean_return", "success_rate_100", "policy_loss",
              "value_loss", "entropy", "clip_fraction", "approx_kl"});
  std::deque<EpisodeLog> window;
  int64_t episode_counter = 0;
  const int64_t iterations = (opts.total_steps + cfg.horizon - 1) / cfg.horizon;
  for (int64_t it = 0; it < iterations; ++it) {
    std::vector<EpisodeLog> episodes;
    RolloutBuffer buf = collect_rollout(env, result.policy, cfg.horizon, rng,
                                        derive_seed(opts.seed, 47), episode_counter,
                                        &episodes);
    buf.compute_gae(cfg.gamma, cfg.gae_lambda);
    UpdateStats st = ppo_update(result.policy, opt, buf, cfg, rng);
    for (const auto& ep : episodes) {
      window.push_back(ep);
      if (window.size() > 100) window.pop_front();
    }
    double mean_return = 0, success = 0;
    if (!window.empty()) {
      for (const auto& ep : window) {
        mean_return += ep.total_reward;
        success += ep.success ? 1.0 : 0.0;
      }
      mean_return /= window.size();
      success /= window.size();
    }
    result.final_mean_return_100 = mean_return;
    result.final_success_rate_100 = success;
    if (csv.is_open())
      csv.write_row({std::to_string(it), std::to_string((it + 1) * cfg.horizon),
                     fmt_g17(mean_return), fmt_g17(success), fmt_g17(st.policy_loss),
                     fmt_g17(st.value_loss), fmt_g17(st.entropy),
                     fmt_g17(st.clip_fraction), fmt_g17(st.approx_kl)});
    if (opts.verbose && (it % 10 == 0 || it + 1 == iterations))
      std::fprintf(stderr, "iter %lld/%lld return %.3f success %.3f entropy %.3f\n",
                   static_cast<long long>(it + 1), static_cast<long long>(iterations),
                   mean_return, success, st.entropy);
  }
  result.iterations = iterations;
  result.episodes = episode_counter;
  return result;
}

// Greedy-action evaluation: fraction of episodes ending at the correct goal.
inline double eval_success_rate(NavEnv& env, const PolicyNet& policy, int64_t episodes,
                                uint64_t seed, std::ostream* trace = nullptr) {
  int64_t successes = 0;
  for (int64_t ep = 0; ep < episodes; ++ep) {
    Observation obs = env.reset(derive_seed(seed, 10'000 + ep));
    for (int64_t t = 0; t < env.config().episode_limit; ++t) {
      const int action = policy.greedy_action(obs.state_vector);
      StepResult res = env.step(action);
      if (trace) write_trace_line(*trace, t, action, res);
      obs = res.obs;
      if (res.done) {
        if (env.reached_goal()) ++successes;
        break;
      }
    }
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

}  // namespace edgenav
