#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "paintbot/dataset.hpp"
#include "paintbot/gradcheck.hpp"
#include "paintbot/trainer.hpp"

using namespace paintbot;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.env.obs_h = cfg.env.obs_w = 17;
  cfg.env.l_max = 8;
  cfg.env.w_max = 6;
  cfg.network = "desk";
  cfg.episodes = 3;
  cfg.t_max = 4;
  cfg.rollouts_per_update = 2;
  cfg.minibatch_size = 4;
  cfg.epochs = 2;
  return cfg;
}

Dataset tiny_dataset(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return Dataset(synthetic_patches(4, 16, 16, rng));
}

Trajectory random_trajectory(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    Transition tr;
    tr.reward = u(rng);
    tr.value = u(rng);
    t.steps.push_back(tr);
  }
  return t;
}

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("paintbot_trainer_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(CurriculumHorizon, Examples) {
  const std::vector<double> r{0.1, 0.5, 0.9};
  EXPECT_EQ(curriculum_horizon(r, 0.4, 10), 2);
  EXPECT_EQ(curriculum_horizon(r, 0.95, 10), 10);
  EXPECT_EQ(curriculum_horizon(r, -1.0, 10), 1);
  EXPECT_EQ(curriculum_horizon(r, 0.0, 2), 1);
  // never exceeds the cap
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> rs(12);
    for (auto& v : rs) v = u(rng);
    EXPECT_LE(curriculum_horizon(rs, u(rng), 7), 7);
  }
}

TEST(ScheduleThresh, RampAndMonotone) {
  TrainConfig cfg;
  cfg.episodes = 100;
  cfg.thresh_start = 0.1;
  cfg.thresh_max = 0.9;
  cfg.thresh_ramp_fraction = 0.5;
  EXPECT_EQ(schedule_thresh(0, cfg), 0.1);
  EXPECT_EQ(schedule_thresh(50, cfg), 0.9);
  EXPECT_EQ(schedule_thresh(99, cfg), 0.9);
  EXPECT_NEAR(schedule_thresh(25, cfg), 0.5, 1e-12);
  for (int a = 0; a < 100; ++a)
    for (int b = a + 1; b < 100; ++b) EXPECT_LE(schedule_thresh(a, cfg), schedule_thresh(b, cfg));
  EXPECT_THROW(schedule_thresh(-1, cfg), InvalidArgument);
}

TEST(SelectReference, ArgminWithTies) {
  const Dataset ds = tiny_dataset();
  const std::vector<double> v{0.3, -0.1, 0.5, 0.2};
  EXPECT_EQ(select_reference(ds, [&](std::size_t i) { return v[i]; }), 1u);
  EXPECT_EQ(select_reference(ds, [&](std::size_t i) { return 7.0 * v[i]; }), 1u);
  EXPECT_EQ(select_reference(ds, [](std::size_t) { return 0.25; }), 0u);
  const Dataset one(std::vector<Canvas>{Canvas(8, 8)});
  EXPECT_EQ(select_reference(one, [](std::size_t) { return 3.0; }), 0u);
}

TEST(SelectReference, UsesValueOnResetObservation) {
  const TrainConfig cfg = tiny_config();
  Dataset ds = tiny_dataset();
  const NetworkParams net = init_params<float>(cfg.arch(), 3);
  std::vector<double> v;
  for (const auto& p : ds.patches) v.push_back(net.forward(reset_observation(p, cfg.env)).value);
  EXPECT_EQ(select_reference(ds, net, ds.patches, cfg.env), argmin_index(v));
}

TEST(CollectTrajectory, CapSeedAndTelescoping) {
  const TrainConfig cfg = tiny_config();
  const Dataset ds = tiny_dataset();
  const NetworkParams net = init_params<float>(cfg.arch(), 4);
  const LossKind loss = LossKind::l2();
  EpisodeSetup setup;
  setup.reference = &ds.patches[1];
  CollectOptions opt;
  opt.horizon_cap = 1;
  std::mt19937_64 rng(1);
  EXPECT_EQ(collect_trajectory(setup, net, loss, cfg.env, opt, rng).steps.size(), 1u);

  opt.horizon_cap = 9;
  std::mt19937_64 r1(5), r2(5);
  const Trajectory a = collect_trajectory(setup, net, loss, cfg.env, opt, r1);
  const Trajectory b = collect_trajectory(setup, net, loss, cfg.env, opt, r2);
  ASSERT_EQ(a.steps.size(), 9u);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].raw_action, b.steps[i].raw_action);
    EXPECT_EQ(a.steps[i].reward, b.steps[i].reward);
  }
  EXPECT_EQ(a.final_canvas, b.final_canvas);
  const double l0 = loss_l2(a.initial_canvas, ds.patches[1]);
  const double lt = loss_l2(a.final_canvas, ds.patches[1]);
  EXPECT_NEAR(a.episode_return, (l0 - lt) / l0, 1e-9);
  EXPECT_TRUE(a.steps.back().done);
}

TEST(CollectTrajectory, CurriculumStopsAtFirstExceedance) {
  const TrainConfig cfg = tiny_config();
  const Dataset ds = tiny_dataset();
  const NetworkParams net = init_params<float>(cfg.arch(), 4);
  EpisodeSetup setup;
  setup.reference = &ds.patches[0];
  CollectOptions opt;
  opt.horizon_cap = 9;
  opt.r_thresh = -10.0;
  std::mt19937_64 rng(6);
  EXPECT_EQ(collect_trajectory(setup, net, LossKind::l2(), cfg.env, opt, rng).steps.size(), 1u);
  opt.r_thresh = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Trajectory t = collect_trajectory(setup, net, LossKind::l2(), cfg.env, opt, rng);
    std::vector<double> rs;
    for (const auto& s : t.steps) rs.push_back(s.reward);
    EXPECT_EQ(static_cast<int>(t.steps.size()), std::min(9, curriculum_horizon(rs, 0.0, 9)));
  }
}

TEST(Advantages, GammaZero) {
  std::mt19937_64 rng(7);
  const Trajectory t = random_trajectory(6, rng);
  const Advantages a = compute_advantages(t, 0.0, 0.9);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a.advantages[i], t.steps[i].reward - t.steps[i].value, 1e-15);
}

TEST(Advantages, RewardToGo) {
  std::mt19937_64 rng(8);
  Trajectory t = random_trajectory(6, rng);
  for (auto& s : t.steps) s.value = 0.0;
  const Advantages a = compute_advantages(t, 1.0, 1.0);
  for (std::size_t i = 0; i < 6; ++i) {
    double togo = 0;
    for (std::size_t j = i; j < 6; ++j) togo += t.steps[j].reward;
    EXPECT_NEAR(a.advantages[i], togo, 1e-12);
  }
}

TEST(Advantages, BruteForceDoubleLoop) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory t = random_trajectory(5, rng);
    const double g = 0.95, l = 0.9;
    const Advantages a = compute_advantages(t, g, l);
    for (std::size_t i = 0; i < 5; ++i) {
      double adv = 0;
      for (std::size_t j = i; j < 5; ++j) {
        const double next = j + 1 < 5 ? t.steps[j + 1].value : 0.0;
        adv += std::pow(g * l, static_cast<double>(j - i)) * (t.steps[j].reward + g * next - t.steps[j].value);
      }
      EXPECT_NEAR(a.advantages[i], adv, 1e-12);
      EXPECT_NEAR(a.returns[i], adv + t.steps[i].value, 1e-12);
    }
  }
}

TEST(Advantages, Normalisation) {
  std::vector<double> a{1.0, 2.0, 3.0, 6.0};
  normalize_advantages(a);
  double mean = 0, var = 0;
  for (double v : a) mean += v / 4;
  for (double v : a) var += (v - mean) * (v - mean) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-6);
  std::vector<double> one{-0.3};
  normalize_advantages(one);
  EXPECT_NEAR(one[0], -1.0, 1e-6);
  std::vector<double> pos{2.5};
  normalize_advantages(pos);
  EXPECT_GT(pos[0], 0.0);
}

namespace {

struct PpoFixture {
  PolicyNetwork<double> net = init_params<double>(gradcheck_arch(11, 22), 21);
  std::vector<PpoSample> samples;
  std::vector<const PpoSample*> batch;

  explicit PpoFixture(bool fresh_log_probs) {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : net.tensor("policy_mean.weight")) v = 0.2 * u(rng);
    for (auto& v : net.tensor("value.weight")) v = 0.2 * u(rng);
    detail::offset_conv_biases(net, rng);
    for (int i = 0; i < 5; ++i) {
      PpoSample s;
      s.observation = random_observation(11, 22, rng);
      const PolicyOutput out = net.forward(s.observation);
      for (int d = 0; d < kActionDim; ++d) s.raw_action[d] = out.mean[d] + 0.3 * u(rng);
      s.old_log_prob = gaussian_log_prob(out.mean, out.log_std, s.raw_action) + (fresh_log_probs ? 0.0 : 0.5 * u(rng));
      s.advantage = u(rng);
      s.ret = u(rng);
      samples.push_back(s);
    }
    for (const auto& s : samples) batch.push_back(&s);
  }
};

}  // namespace

TEST(Ppo, FirstEpochRatiosAreOne) {
  PpoFixture f(true);
  TrainConfig cfg;
  PpoStats stats;
  std::vector<double> grads(f.net.parameter_count(), 0.0);
  ppo_loss_and_gradient<double>(f.net, f.batch, cfg, grads, &stats);
  EXPECT_EQ(stats.clip_fraction, 0.0);
  double adv_sum = 0;
  for (const auto& s : f.samples) adv_sum += s.advantage;
  EXPECT_NEAR(stats.surrogate, adv_sum, 1e-12);  // ratio 1 => surrogate = sum of advantages
}

TEST(Ppo, ClippedBranchIsFlat) {
  PpoFixture f(true);
  TrainConfig cfg;
  cfg.clip_eps = 0.2;
  PpoSample s = f.samples[0];
  s.advantage = 1.0;
  s.old_log_prob -= 1.0;  // ratio e^1 > 1 + eps with a favourable advantage
  const std::vector<const PpoSample*> one{&s};
  const double base = ppo_loss<double>(f.net, one, cfg);
  s.old_log_prob -= 1.0;  // ratio grows further
  EXPECT_NEAR(ppo_loss<double>(f.net, one, cfg), base, 1e-15);
  std::vector<double> grads(f.net.parameter_count(), 0.0);
  PpoStats stats;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  ppo_loss_and_gradient<double>(f.net, one, cfg, grads, &stats);
  EXPECT_EQ(stats.clip_fraction, 1.0);
  for (double g : grads) EXPECT_EQ(g, 0.0);
}

TEST(Ppo, HugeClipMatchesVanillaPolicyGradient) {
  PpoFixture f(true);
  TrainConfig cfg;
  cfg.clip_eps = 1e9;
  cfg.value_coef = 0.5;
  cfg.entropy_coef = 0.01;
  std::vector<double> grads(f.net.parameter_count(), 0.0);
  ppo_loss_and_gradient<double>(f.net, f.batch, cfg, grads);
  // vanilla surrogate: mean(-A log pi + c_v (V - R)^2 - c_e H), differentiated numerically
  auto vanilla = [&] {
    double j = 0;
    for (const auto& s : f.samples) {
      const PolicyOutput out = f.net.forward(s.observation);
      j += -s.advantage * gaussian_log_prob(out.mean, out.log_std, s.raw_action) +
           cfg.value_coef * std::pow(out.value - s.ret, 2) - cfg.entropy_coef * gaussian_entropy(out.log_std);
    }
    return j / static_cast<double>(f.samples.size());
  };
  std::mt19937_64 rng(23);
  double worst = 0;
  for (const auto& t : f.net.tensors()) {
    for (std::size_t i : detail::probe_indices(t.offset, t.count, 12, rng)) {
      const double saved = f.net.params()[i];
      f.net.params()[i] = saved + 1e-5;
      const double up = vanilla();
      f.net.params()[i] = saved - 1e-5;
      const double down = vanilla();
      f.net.params()[i] = saved;
      worst = std::max(worst, relative_error(grads[i], (up - down) / 2e-5));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Ppo, ValueErrorDecreasesOnFixedTransition) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.minibatch_size = 1;
  cfg.learning_rate = 1e-3;
  NetworkParams net = init_params<float>(cfg.arch(), 30);
  std::mt19937_64 rng(31);
  PpoSample s;
  s.observation = random_observation(cfg.env.obs_h, 2 * cfg.env.obs_w, rng);
  const PolicyOutput out = net.forward(s.observation);
  s.raw_action = out.mean;
  s.old_log_prob = gaussian_log_prob(out.mean, out.log_std, s.raw_action);
  s.advantage = 1.0;
  s.ret = 0.8;
  const std::vector<PpoSample> batch{s};
  Adam<float> opt(net.parameter_count(), cfg.learning_rate);
  const double initial = std::pow(out.value - s.ret, 2);
  double prev = initial;
  // monotone while far from the target; Adam may then oscillate around it
  for (int k = 0; k < 10; ++k) {
    ppo_update(net, opt, batch, cfg, rng);
    const double err = std::pow(net.forward(s.observation).value - s.ret, 2);
    if (k < 3) {
      EXPECT_LT(err, prev) << "update " << k;
    }
    prev = err;
  }
  EXPECT_LT(prev, 0.1 * initial);
}

TEST(Ppo, SingleSampleNormalisationKeepsUpdateDirection) {
  for (double adv : {0.03, -7.0}) {
    PpoFixture f(true);
    TrainConfig cfg;
    cfg.value_coef = 0.0;
    cfg.entropy_coef = 0.0;
    PpoSample s = f.samples[0];
    s.advantage = adv;
    std::vector<double> g_raw(f.net.parameter_count(), 0.0), g_norm(f.net.parameter_count(), 0.0);
    ppo_loss_and_gradient<double>(f.net, std::vector<const PpoSample*>{&s}, cfg, g_raw);
    std::vector<double> a{adv};
    normalize_advantages(a);
    s.advantage = a[0];
    ppo_loss_and_gradient<double>(f.net, std::vector<const PpoSample*>{&s}, cfg, g_norm);
    // positive rescaling: the policy-mean gradient points the same way
    const auto idx = f.net.tensors()[f.net.fc_index() + 3];
    for (std::size_t i = idx.offset; i < idx.offset + idx.count; ++i) {
      EXPECT_GE(g_raw[i] * g_norm[i], 0.0);
    }
  }
}

TEST(Train, SingleEpisodeArtifacts) {
  TrainConfig cfg = tiny_config();
  cfg.episodes = 1;
  cfg.rollouts_per_update = 1;
  cfg.checkpoint_every = 1;
  Dataset ds = tiny_dataset();
  TrainOptions opt;
  opt.out_dir = temp_dir("single");
  const TrainResult r = train(cfg, ds, opt);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_GE(r.env_steps, 1);
  EXPECT_LE(r.env_steps, cfg.t_max);
  EXPECT_TRUE(std::filesystem::exists(opt.out_dir + "/final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(opt.out_dir + "/ckpt_1.ckpt"));
  EXPECT_EQ(read_episodes_done(opt.out_dir + "/final.ckpt"), 1);
  const std::string csv = slurp(opt.out_dir + "/metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Train, DeterministicAndWorkerIndependent) {
  TrainConfig cfg = tiny_config();
  cfg.seed = 42;
  auto run = [&](int workers, const std::string& dir) {
    TrainConfig c = cfg;
    c.workers = workers;
    Dataset ds = tiny_dataset();
    TrainOptions opt;
    opt.out_dir = temp_dir(dir);
    const TrainResult r = train(c, ds, opt);
    return std::make_pair(slurp(opt.out_dir + "/metrics.csv"), slurp(opt.out_dir + "/final.ckpt"));
  };
  const auto a = run(1, "det_a"), b = run(1, "det_b"), c = run(2, "det_c");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Train, StepBudgetStopsEarly) {
  TrainConfig cfg = tiny_config();
  cfg.episodes = 1000;
  cfg.max_env_steps = 20;
  Dataset ds = tiny_dataset();
  const TrainResult r = train(cfg, ds);
  EXPECT_GE(r.env_steps, 20);
  EXPECT_LT(r.env_steps, 20 + cfg.rollouts_per_update * cfg.t_max);
  EXPECT_LT(r.metrics.size(), 1000u);
}

TEST(Train, SamplingModes) {
  for (SamplingMode m : {SamplingMode::Value, SamplingMode::MeanReward, SamplingMode::Uniform}) {
    TrainConfig cfg = tiny_config();
    cfg.sampling = m;
    cfg.episodes = 6;
    Dataset ds = tiny_dataset();
    const TrainResult r = train(cfg, ds);
    long total = 0;
    for (long c : r.selection_counts) total += c;
    EXPECT_EQ(total, 6);
  }
}
