#include <catch2/catch_amalgamated.hpp>

#include "edgenav/gradcheck.hpp"
#include "edgenav/ppo.hpp"

using namespace edgenav;

namespace {

RolloutBuffer manual_buffer(std::vector<Transition> steps, double bootstrap = 0.0) {
  RolloutBuffer buf;
  buf.steps = std::move(steps);
  buf.bootstrap_value = bootstrap;
  return buf;
}

Transition make_tr(std::vector<double> obs, int action, double reward, bool done,
                   double log_prob, double value) {
  Transition t;
  t.obs = std::move(obs);
  t.action = action;
  t.reward = reward;
  t.done = done;
  t.log_prob = log_prob;
  t.value = value;
  return t;
}

std::vector<double> flat_grads(const ParamMap<double>& pm) {
  std::vector<double> g;
  for (const auto& [name, p] : pm.items)
    if (p.has_grad()) g.insert(g.end(), p.grad().begin(), p.grad().end());
  return g;
}

}  // namespace

TEST_CASE("policy outputs form a distribution", "[ppo][policy]") {
  PolicyNet policy(18, 64, 3, 7);
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> obs(18);
    for (auto& v : obs) v = rng.uniform(-1, 1);
    auto probs = policy.action_probs(obs);
    double sum = 0;
    for (double p : probs) {
      REQUIRE(std::isfinite(p));
      REQUIRE(p >= 0);
      sum += p;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("categorical sampling matches policy probabilities", "[ppo][policy][chi2]") {
  PolicyNet policy(18, 64, 3, 11);
  std::vector<double> obs(18, 0.3);
  auto probs = policy.action_probs(obs);
  Rng rng(123);
  std::array<int64_t, 3> counts{};
  const int64_t n = 10'000;
  for (int64_t i = 0; i < n; ++i) counts[policy.act(obs, rng).action]++;
  double chi2 = 0;
  for (int a = 0; a < 3; ++a) {
    const double expected = probs[a] * n;
    chi2 += (counts[a] - expected) * (counts[a] - expected) / expected;
  }
  REQUIRE(chi2 < 9.21);  // chi-square(2) at p=0.01
}

TEST_CASE("GAE recursion", "[ppo][gae]") {
  SECTION("hand-unrolled 3-step episode") {
    const double g = 0.9, l = 0.8;
    RolloutBuffer buf = manual_buffer({
        make_tr({0}, 0, 1.0, false, 0, 0.5),
        make_tr({0}, 0, 2.0, false, 0, 0.4),
        make_tr({0}, 0, 3.0, true, 0, 0.3),
    });
    buf.compute_gae(g, l);
    const double d2 = 3.0 - 0.3;
    const double d1 = 2.0 + g * 0.3 - 0.4;
    const double d0 = 1.0 + g * 0.4 - 0.5;
    const double a2 = d2;
    const double a1 = d1 + g * l * a2;
    const double a0 = d0 + g * l * a1;
    REQUIRE(buf.advantages[2] == Catch::Approx(a2).margin(1e-15));
    REQUIRE(buf.advantages[1] == Catch::Approx(a1).margin(1e-15));
    REQUIRE(buf.advantages[0] == Catch::Approx(a0).margin(1e-15));
    REQUIRE(buf.returns[0] == Catch::Approx(a0 + 0.5).margin(1e-15));
  }
  SECTION("all-zero rewards and values give zero advantages pre-normalization") {
    RolloutBuffer buf = manual_buffer({
        make_tr({0}, 0, 0.0, false, 0, 0.0),
        make_tr({0}, 0, 0.0, false, 0, 0.0),
        make_tr({0}, 0, 0.0, false, 0, 0.0),
    });
    buf.compute_gae(0.99, 0.95);
    for (double a : buf.advantages) REQUIRE(a == 0.0);
  }
  SECTION("bootstrap enters at a horizon cut") {
    RolloutBuffer buf = manual_buffer({make_tr({0}, 0, 1.0, false, 0, 0.5)}, 2.0);
    buf.compute_gae(0.9, 0.95);
    REQUIRE(buf.advantages[0] == Catch::Approx(1.0 + 0.9 * 2.0 - 0.5).margin(1e-15));
  }
  SECTION("normalized advantages have mean 0 and unit std") {
    Rng rng(5);
    std::vector<Transition> steps;
    for (int i = 0; i < 64; ++i)
      steps.push_back(make_tr({0}, 0, rng.uniform(-1, 1), false, 0, rng.uniform(-1, 1)));
    RolloutBuffer buf = manual_buffer(std::move(steps), 0.1);
    buf.compute_gae(0.99, 0.95);
    buf.normalize_advantages();
    double mean = 0;
    for (double a : buf.advantages) mean += a;
    mean /= buf.advantages.size();
    double var = 0;
    for (double a : buf.advantages) var += (a - mean) * (a - mean);
    var /= buf.advantages.size();
    REQUIRE(std::abs(mean) < 1e-10);
    REQUIRE(std::sqrt(var) == Catch::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("collect_rollout determinism", "[ppo][rollout]") {
  auto run = [] {
    NavConfig cfg;
    cfg.num_boxes = 1;
    NavEnv env(cfg);
    PolicyNet policy(18, 32, 3, 99);
    Rng rng(1);
    int64_t episode_counter = 0;
    RolloutBuffer buf = collect_rollout(env, policy, 128, rng, 555, episode_counter);
    std::vector<double> sig;
    for (const auto& tr : buf.steps) {
      sig.push_back(tr.reward);
      sig.push_back(tr.log_prob);
      sig.push_back(double(tr.action));
    }
    sig.push_back(buf.bootstrap_value);
    return sig;
  };
  REQUIRE(run() == run());
}

TEST_CASE("ppo_update mechanics", "[ppo][update]") {
  PolicyNet policy(4, 16, 3, 21);
  Rng rng(2);

  auto fresh_buffer = [&](int64_t n) {
    std::vector<Transition> steps;
    Rng orng(7);
    for (int64_t i = 0; i < n; ++i) {
      std::vector<double> obs(4);
      for (auto& v : obs) v = orng.uniform(-1, 1);
      auto s = policy.act(obs, orng);
      steps.push_back(make_tr(obs, s.action, orng.uniform(-1, 1), false, s.log_prob,
                              s.value));
    }
    RolloutBuffer buf = manual_buffer(std::move(steps), 0.0);
    buf.compute_gae(0.99, 0.95);
    return buf;
  };

  SECTION("ratio 1 on the first minibatch: no clipping, zero KL") {
    RolloutBuffer buf = fresh_buffer(32);
    PpoConfig cfg;
    cfg.batch_size = 32;  // single minibatch
    cfg.update_epochs = 1;
    Adam<double> opt(policy.parameters(), cfg.lr);
    UpdateStats st = ppo_update(policy, opt, buf, cfg, rng);
    REQUIRE(st.minibatches_applied == 1);
    REQUIRE(st.clip_fraction == 0.0);
    REQUIRE(std::abs(st.approx_kl) < 1e-12);
  }
  SECTION("zero advantages keep the policy term at exactly zero") {
    std::vector<Transition> steps;
    Rng orng(8);
    for (int i = 0; i < 16; ++i) {
      std::vector<double> obs(4, 0.1 * i);
      auto s = policy.act(obs, orng);
      steps.push_back(make_tr(obs, s.action, 0.0, false, s.log_prob, 0.0));
    }
    RolloutBuffer buf = manual_buffer(std::move(steps), 0.0);
    buf.compute_gae(0.99, 0.95);
    PpoConfig cfg;
    cfg.batch_size = 16;
    cfg.update_epochs = 1;
    Adam<double> opt(policy.parameters(), cfg.lr);
    UpdateStats st = ppo_update(policy, opt, buf, cfg, rng);
    REQUIRE(st.policy_loss == 0.0);
  }
  SECTION("single transition matches the hand-computed clipped surrogate") {
    std::vector<double> obs = {0.3, -0.2, 0.9, 0.0};
    Rng orng(9);
    auto s = policy.act(obs, orng);
    const double fake_old_logp = s.log_prob - 0.7;  // force ratio exp(0.7)
    const double adv = -1.3;
    RolloutBuffer buf =
        manual_buffer({make_tr(obs, s.action, 0.0, true, fake_old_logp, 0.0)}, 0.0);
    buf.advantages = {adv};
    buf.returns = {0.0};
    PpoConfig cfg;
    cfg.batch_size = 1;
    cfg.update_epochs = 1;
    cfg.clip_eps = 0.2;
    Adam<double> opt(policy.parameters(), cfg.lr);
    UpdateStats st = ppo_update(policy, opt, buf, cfg, rng);
    const double ratio = std::exp(0.7);
    const double expected =
        -std::min(ratio * adv, std::clamp(ratio, 0.8, 1.2) * adv);
    REQUIRE(st.policy_loss == Catch::Approx(expected).epsilon(1e-12));
  }
  SECTION("kl early stop never applies a minibatch beyond the bound") {
    RolloutBuffer buf = fresh_buffer(64);
    PpoConfig cfg;
    cfg.batch_size = 8;
    cfg.update_epochs = 8;
    cfg.lr = 0.05;  // aggressive steps to force KL growth
    cfg.target_kl = 0.015;
    Adam<double> opt(policy.parameters(), cfg.lr);
    UpdateStats st = ppo_update(policy, opt, buf, cfg, rng);
    REQUIRE(st.minibatches_applied < 64);
    REQUIRE(st.max_applied_kl <= cfg.target_kl);
  }
}

TEST_CASE("clipped surrogate reduces to vanilla policy gradient", "[ppo][gradient]") {
  PolicyNet policy(4, 16, 3, 33);
  std::vector<double> obs_v = {0.2, -0.4, 0.7, 0.1};
  Rng orng(10);
  auto s = policy.act(obs_v, orng);
  const double adv = 0.8;

  ParamMap<double> pm = policy.parameters();
  Tensor obs = Tensor::from_data({1, 4}, std::vector<double>(obs_v.begin(), obs_v.end()));
  Tensor onehot = Tensor::zeros({1, 3});
  onehot.data()[s.action] = 1.0;

  // PPO policy term with clipping disabled (eps effectively infinite)
  pm.zero_grad();
  {
    auto ev = policy.forward(obs);
    Tensor logp_new = sum_lastdim(mul(log_softmax_lastdim(ev.logits), onehot));
    Tensor ratio = exp(add_scalar(logp_new, -s.log_prob));
    Tensor clipped = minimum(maximum(ratio, Tensor::full({1, 1}, 1.0 - 1e9)),
                             Tensor::full({1, 1}, 1.0 + 1e9));
    Tensor adv_t = Tensor::full({1, 1}, adv);
    backward(neg(mean(minimum(mul(ratio, adv_t), mul(clipped, adv_t)))));
  }
  std::vector<double> g_ppo = flat_grads(pm);

  // vanilla policy gradient: -log pi(a|s) * adv
  pm.zero_grad();
  {
    auto ev = policy.forward(obs);
    Tensor logp_new = sum_lastdim(mul(log_softmax_lastdim(ev.logits), onehot));
    backward(scale(neg(mean(logp_new)), adv));
  }
  std::vector<double> g_pg = flat_grads(pm);

  REQUIRE(g_ppo.size() == g_pg.size());
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < g_ppo.size(); ++i) {
    dot += g_ppo[i] * g_pg[i];
    na += g_ppo[i] * g_ppo[i];
    nb += g_pg[i] * g_pg[i];
  }
  REQUIRE(dot / std::sqrt(na * nb) > 0.999);
}

TEST_CASE("train_policy bookkeeping and determinism", "[ppo][train]") {
  auto run = [](const std::string& csv) {
    NavConfig ncfg;
    ncfg.num_boxes = 1;
    ncfg.episode_limit = 64;
    NavEnv env(ncfg);
    PpoConfig cfg;
    cfg.horizon = 128;
    cfg.batch_size = 32;
    cfg.hidden = 16;
    PolicyTrainOptions opts;
    opts.total_steps = 512;
    opts.seed = 4;
    opts.csv_path = csv;
    return train_policy(env, cfg, opts);
  };
  namespace fs = std::filesystem;
  const std::string csv_a = (fs::temp_directory_path() / "ppo_a.csv").string();
  const std::string csv_b = (fs::temp_directory_path() / "ppo_b.csv").string();
  PolicyTrainResult a = run(csv_a);
  PolicyTrainResult b = run(csv_b);
  REQUIRE(a.iterations == 4);  // 512 / 128
  std::ifstream fa(csv_a), fb(csv_b);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  const std::string text_a = sa.str(), text_b = sb.str();
  REQUIRE(text_a == text_b);
  REQUIRE(std::count(text_a.begin(), text_a.end(), '\n') == 5);  // header + 4 rows
  fs::remove(csv_a);
  fs::remove(csv_b);
}

TEST_CASE("eval_success_rate", "[ppo][eval]") {
  SECTION("uniform-ish random policy succeeds well below 0.5 in the 3-object room") {
    NavConfig cfg;
    cfg.num_boxes = 3;
    cfg.episode_limit = 256;
    NavEnv env(cfg);
    PolicyNet policy(18, 16, 3, 77);  // fresh net, near-uniform behavior
    const double rate = eval_success_rate(env, policy, 40, 9);
    REQUIRE(rate < 0.5);
  }
  SECTION("manual adjacent-goal episodes always succeed with forward motion") {
    NavConfig cfg;
    cfg.num_boxes = 1;
    NavEnv env(cfg);
    int successes = 0;
    for (int ep = 0; ep < 10; ++ep) {
      env.reset(ep);
      EnvState& st = env.mutable_state();
      st.boxes[0] = {st.goal_class, 5.0, 5.0, 0.8};
      st.agent_x = 4.2;
      st.agent_y = 5.0;
      st.heading = 0.0;
      st.prev_goal_distance = env.goal_distance();
      StepResult res = env.step(kForward);
      if (res.done && env.reached_goal()) ++successes;
    }
    REQUIRE(successes == 10);
  }
  SECTION("evaluation is reproducible") {
    NavConfig cfg;
    cfg.num_boxes = 2;
    cfg.episode_limit = 128;
    NavEnv env(cfg);
    PolicyNet policy(18, 16, 3, 5);
    const double r1 = eval_success_rate(env, policy, 20, 3);
    NavEnv env2(cfg);
    const double r2 = eval_success_rate(env2, policy, 20, 3);
    REQUIRE(r1 == r2);
  }
}
